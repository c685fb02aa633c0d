"""Exhaustive and randomized audits of the combinatorial and operator bounds."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .fourier import (apply_H, apply_inv_grad, apply_S, norms, random_field,
                      random_kernel)
from .partitions import (K_N_many, K_polynomial, bell_number, enumerate_partitions,
                         partition_count_bound)

DEFAULT_NS = tuple(2 ** k for k in range(11))


def partition_audit(m_max: int = 8, Ns: Sequence[int] = DEFAULT_NS) -> list[dict]:
    """Exact checks for every partition of ``[m]``, ``m <= m_max``.

    Per ``m`` and ``N``: the worst ratio ``|K_N(rho)| N^(|rho|-1) / m!`` (must be
    at most 1).  Per ``m``: low-order coefficients of ``K(x, rho)`` below
    ``|rho| - 1`` vanish, the absolute coefficient sum is at most ``m!``,
    ``K(1/N, rho) = K_N(rho)``, and the partition count obeys ``2^(m-1) m!``.
    """
    rows = []
    for m in range(1, m_max + 1):
        fact = math.factorial(m)
        worst = {N: 0 for N in Ns}
        low_ok = sum_ok = poly_ok = True
        max_abs_sum = 0
        count = 0
        for rho in enumerate_partitions(m):
            count += 1
            poly = K_polynomial(rho)
            if any(poly.coefficient(l) != 0 for l in range(len(rho) - 1)):
                low_ok = False
            max_abs_sum = max(max_abs_sum, poly.abs_sum())
            if poly.abs_sum() > fact:
                sum_ok = False
            values = K_N_many(rho, Ns)
            for N, v in zip(Ns, values):
                if poly(type(v)(1, N)) != v:
                    poly_ok = False
                ratio = abs(v) * N ** (len(rho) - 1) / fact
                worst[N] = max(worst[N], ratio)
        for N in Ns:
            rows.append({"check": "K_N bound", "m": m, "N": N, "max_ratio": float(worst[N]),
                         "exact_ratio": str(worst[N]), "passed": worst[N] <= 1})
        rows.append({"check": "low coefficients vanish", "m": m, "passed": low_ok})
        rows.append({"check": "coefficient sum <= m!", "m": m, "max_abs_sum": max_abs_sum,
                     "m_factorial": fact, "passed": sum_ok})
        rows.append({"check": "K(1/N) equals K_N", "m": m, "passed": poly_ok})
        rows.append({"check": "partition count", "m": m, "count": count,
                     "bell": bell_number(m), "bound": partition_count_bound(m),
                     "passed": count == bell_number(m) <= partition_count_bound(m)})
    return rows


def operator_audit(trials: int = 1000, seed: int = 0, slack: float = 1e-12) -> list[dict]:
    """Random fields and kernels: ``|grad_k|^-1`` composed with H or S is bounded by l1 mass.

    Checked in both the truncated l2 norm and the l-hat-infinity norm.  One
    row per (operator, norm) with the smallest relative slack observed.
    """
    rng = np.random.default_rng(seed)
    worst = {(op, nm): math.inf for op in ("H", "S") for nm in ("l2", "linf")}
    failures = {key: 0 for key in worst}
    for _ in range(trials):
        d = int(rng.integers(1, 3))
        m = int(rng.integers(2, 4)) if d == 1 else 2
        M = int(rng.integers(1, 4))
        kernel = random_kernel(rng, d, int(rng.integers(1, 4)), int(rng.integers(1, M + 1)),
                               real=bool(rng.integers(0, 2)))
        h = random_field(rng, m, d, M, real=bool(rng.integers(0, 2)))
        k = int(rng.integers(0, m - 1))
        l = int(rng.integers(0, m))
        hn = norms(h)
        outs = {"H": apply_inv_grad(apply_H(kernel, h, k, star=m - 1), k),
                "S": apply_inv_grad(apply_S(kernel, h, k, l), k)}
        for op, out in outs.items():
            on = norms(out)
            for nm in ("l2", "linf"):
                bound = kernel.l1_mass * hn[nm]
                rel = (bound - on[nm]) / max(bound, 1e-300)
                worst[(op, nm)] = min(worst[(op, nm)], rel)
                if on[nm] > bound * (1 + slack) + slack:
                    failures[(op, nm)] += 1
    return [{"operator": op, "norm": nm, "trials": trials, "min_relative_slack": worst[(op, nm)],
             "failures": failures[(op, nm)], "passed": failures[(op, nm)] == 0}
            for op, nm in worst]
