"""Cumulants of linear statistics of the empirical measure and normal-approximation checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from .chaos import FreqProbe, _MarginalTable, check_snapshots, jackknife
from .fourier import SpectralField, eval_field, pair, power, tensor_all, tensor_product
from .partitions import K_N_eval, enumerate_partitions, moments_to_cumulants

DEGENERATE_VARIANCE = 1e-12


class TestFunction:
    """Real trigonometric polynomial ``phi`` on T^d with a cached ``||phi^||_l1``."""

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, field_: SpectralField):
        if field_.num_vars != 1:
            raise ValueError("test functions take a single torus variable")
        if field_.conjugate_symmetry_error() > 1e-12:
            raise ValueError("test function must be real (conjugate-symmetric coefficients)")
        self.field = SpectralField(field_.coeffs, 1, field_.dim, real=True)
        self.l1 = float(np.sum(np.abs(self.field.coeffs)))
        self._powers: dict[int, SpectralField] = {1: self.field}

    @classmethod
    def cosine(cls, freq: int = 1, dim: int = 1) -> "TestFunction":
        e = (freq,) + (0,) * (dim - 1)
        return cls(SpectralField.from_modes({e: 0.5, tuple(-v for v in e): 0.5}, 1, dim))

    @classmethod
    def fejer(cls, order: int) -> "TestFunction":
        """``sum_{k=1..order} (1 - k/(order+1)) cos(2 pi k x)``; strongly skewed for large order."""
        modes = {}
        for k in range(1, order + 1):
            w = 1.0 - k / (order + 1)
            modes[(k,)] = modes[(-k,)] = 0.5 * w
        return cls(SpectralField.from_modes(modes, 1, 1))

    @classmethod
    def constant(cls, c: float, dim: int = 1) -> "TestFunction":
        return cls(SpectralField.constant(c, 1, dim))

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def max_mode(self) -> int:
        freqs, _ = self.field.nonzero_modes()
        return int(np.abs(freqs).max(initial=0))

    def power(self, n: int) -> SpectralField:
        if n not in self._powers:
            self._powers[n] = power(self.field, n)
        return self._powers[n]

    def to_dict(self) -> dict:
        return self.field.to_dict()


def linear_statistic(snapshots, phi: TestFunction) -> np.ndarray | float:
    """``(1/N) sum_i phi(X_i)`` per snapshot."""
    X = check_snapshots(snapshots, phi.dim)
    vals = eval_field(phi.field, X[:, :, None, :])
    scale = max(1.0, phi.l1)
    if np.max(np.abs(np.imag(vals)), initial=0.0) > 1e-12 * scale:
        raise ValueError("test function evaluates to non-real values")
    out = np.real(vals).mean(axis=1)
    return float(out[0]) if np.ndim(snapshots) == 2 else out


# empirical cumulants ----------------------------------------------------------

def empirical_cumulants(samples, max_order: int = 4, groups: int | None = None):
    """Plug-in cumulants of replica samples with jackknife standard errors.

    Moments are taken about the sample mean (cumulants of order >= 2 are
    shift invariant), which keeps the raw-moment combination well conditioned.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 10 * max_order:
        raise ValueError(f"need at least {10 * max_order} replicas for order {max_order} "
                         f"(got {x.size})")
    shift = float(np.mean(x))
    y = x - shift
    powers = np.stack([y ** k for k in range(1, max_order + 1)], axis=1)

    def estimator(means):
        mu = means["mu"]
        kap = moments_to_cumulants([mu[..., k] for k in range(max_order)])
        return np.stack([np.asarray(k, dtype=float) for k in kap], axis=-1)

    kappa, se, _ = jackknife(estimator, {"mu": powers}, groups)
    kappa = np.real(np.asarray(kappa, dtype=float)).copy()
    kappa[0] += shift
    return kappa, np.asarray(se)


# cumulants from correlation functions --------------------------------------------

def cumulants_from_correlations(phi: TestFunction, g: dict, N: int, m: int) -> float:
    """``sum_pi N^(|pi|-m) sum_{rho of pi} K_N(rho) < (x)_B phi^|B| , (x)_P g_|P| >``."""
    if not 1 <= m <= 3:
        raise ValueError("cumulant order must be in 1..3")
    missing = [k for k in range(1, m + 1) if k not in g]
    if missing:
        raise KeyError(f"missing correlation orders {missing}")
    total = 0j
    for pi in enumerate_partitions(m):
        psis = [phi.power(len(b)) for b in pi.blocks]
        inner = 0j
        for rho in enumerate_partitions(len(pi)):
            k = K_N_eval(rho, N)
            if k == 0:
                continue
            prod = 1 + 0j
            for P in rho.blocks:
                prod *= pair(tensor_all([psis[i - 1] for i in P]), g[len(P)])
            inner += float(k) * prod
        total += float(N) ** (len(pi) - m) * inner
    return float(total.real)


def correlation_cutoffs(phi: TestFunction, max_order: int) -> dict[int, int]:
    """Boxes wide enough that every pairing in the cumulant formula is exact."""
    n = phi.max_mode
    return {k: (max_order - k + 1) * n for k in range(1, max_order + 1)}


def formula_cumulants(snapshots, phi: TestFunction, max_order: int = 3,
                      groups: int | None = 20):
    """Cumulants via estimated correlation functions, with grouped-jackknife errors."""
    X = check_snapshots(snapshots, phi.dim)
    R, N, d = X.shape
    cutoffs = correlation_cutoffs(phi, max_order)
    tables, probes = {}, {}
    samples = {}
    for k, M in cutoffs.items():
        probes[k] = FreqProbe.box(k, d, M, include_zero_planes=True)
        tables[k] = _MarginalTable(X, k, probes[k].freqs, d)
        for j, s in tables[k].samples.items():
            samples[(k, j)] = s

    def one(means):
        g = {}
        for k, tab in tables.items():
            vals = tab.combine({j: means[(k, j)] for j in tab.samples})
            g[k] = SpectralField.from_modes(dict(zip(probes[k].freqs, vals)), k, d, cutoffs[k])
        return np.array([cumulants_from_correlations(phi, g, N, m)
                         for m in range(1, max_order + 1)])

    def estimator(means):
        lead = next(iter(means.values())).ndim
        if lead == 1:
            return one(means)
        G = next(iter(means.values())).shape[0]
        return np.stack([one({key: v[i] for key, v in means.items()}) for i in range(G)])

    kappa, se, _ = jackknife(estimator, samples, groups)
    return np.asarray(kappa), np.asarray(se)


# bounds and diagnostics -------------------------------------------------------------

def cumulant_bound(phi: TestFunction, m: int, N: int) -> float:
    """``(8 ||phi^||_l1)^m (m!)^4 / N^(m-1)``."""
    return (8.0 * phi.l1) ** m * math.factorial(m) ** 4 / float(N) ** (m - 1)


def cumulant_bound_audit(phi: TestFunction, kappas, N: int, ses=None) -> list[dict]:
    """One row per order; ``passed`` is false when ``|kappa| - se`` exceeds the bound."""
    rows = []
    for m, kap in enumerate(kappas, start=1):
        se = 0.0 if ses is None else float(ses[m - 1])
        bound = cumulant_bound(phi, m, N)
        rows.append({"order": m, "value": float(kap), "se": se, "bound": bound,
                     "passed": abs(float(kap)) - se <= bound})
    return rows


def berry_esseen_delta(phi: TestFunction, N: int, variance: float, gamma: int = 3) -> float:
    """Implied ``Delta`` for the standardized statistic from the cumulant bound.

    For ``Y = (S - E S)/sd`` the bound gives ``|kappa_m(Y)| <= (m!)^(1+gamma) / Delta^(m-2)``
    once ``Delta`` is small enough for every ``m >= 3``; this returns the
    largest ``Delta`` that works at orders 3..12.
    """
    if variance <= 0:
        return 0.0
    best = math.inf
    for m in range(3, 13):
        bound = cumulant_bound(phi, m, N) / variance ** (m / 2)
        delta = (math.factorial(m) ** (1 + gamma) / bound) ** (1.0 / (m - 2))
        best = min(best, delta)
    return best


def ks_distance(samples) -> tuple[float, bool]:
    """Kolmogorov distance of self-standardized samples to N(0, 1).

    Returns ``(distance, degenerate)``; degenerate samples (variance below
    1e-12) are centred only, so a point mass gives 0.5.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    centred = x - x.mean()
    var = centred.var()
    degenerate = var < DEGENERATE_VARIANCE
    z = centred if degenerate else centred / math.sqrt(var)
    return float(stats.kstest(z, "norm").statistic), bool(degenerate)


def variance_limit(phi: TestFunction, rho: SpectralField, b: SpectralField) -> float:
    """``int phi^2 drho - (int phi drho)^2 + int phi (x) phi db``."""
    f = phi.field
    first = pair(phi.power(2), rho)
    mean = pair(f, rho)
    corr = pair(tensor_product(f, f), b)
    return float((first - mean ** 2 + corr).real)


# reports ---------------------------------------------------------------------------

@dataclass
class CltCell:
    N: int
    t: float
    mean: float
    n_variance: float
    n_variance_se: float
    kappas: np.ndarray
    kappa_ses: np.ndarray
    ks: float
    degenerate: bool
    limit: float | None = None

    def summary(self) -> dict:
        out = {"N": self.N, "t": self.t, "mean": self.mean, "n_variance": self.n_variance,
               "n_variance_se": self.n_variance_se, "ks": self.ks,
               "variance_hypothesis_met": not self.degenerate}
        if self.limit is not None:
            out["limit"] = self.limit
            out["gap"] = self.n_variance - self.limit
        return out


@dataclass
class CltReport:
    cells: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "t", "kappa_order", "value", "se"])
        for c in self.cells:
            for m, (v, s) in enumerate(zip(c.kappas, c.kappa_ses), start=1):
                w.writerow([c.N, repr(c.t), m, repr(float(v)), repr(float(s))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"cells": [c.summary() for c in self.cells]}


def clt_cell(snapshots, phi: TestFunction, t: float, max_order: int = 4,
             limit: float | None = None, groups: int | None = None) -> CltCell:
    X = check_snapshots(snapshots, phi.dim)
    N = X.shape[1]
    s = linear_statistic(X, phi)
    kap, se = empirical_cumulants(s, max_order, groups)
    ks, degenerate = ks_distance(s)
    return CltCell(N, t, float(kap[0]), N * float(kap[1]), N * float(se[1]), kap, se, ks,
                   degenerate, limit)


class CumulantEstimator(BaseEstimator):
    """Empirical cumulants of ``int phi d mu_N`` from snapshots ``(R, N, d)``.

    ``phi`` defaults to ``cos(2 pi x)``.  After ``fit``: ``cumulants_``,
    ``cumulant_se_``, ``ks_`` and ``statistic_``.
    """

    def __init__(self, phi: TestFunction | None = None, max_order: int = 4,
                 jackknife_groups: int | None = None):
        self.phi = phi
        self.max_order = max_order
        self.jackknife_groups = jackknife_groups

    def fit(self, X, y=None):
        phi = self.phi if self.phi is not None else TestFunction.cosine()
        X = check_snapshots(X, phi.dim)
        self.statistic_ = linear_statistic(X, phi)
        self.cumulants_, self.cumulant_se_ = empirical_cumulants(
            self.statistic_, self.max_order, self.jackknife_groups)
        self.ks_, self.degenerate_ = ks_distance(self.statistic_)
        return self

    def transform(self, X):
        phi = self.phi if self.phi is not None else TestFunction.cosine()
        return np.asarray(linear_statistic(check_snapshots(X, phi.dim), phi)).reshape(-1, 1)

