"""Correlation functions of particle ensembles, estimated in Fourier space.

Marginal Fourier modes are U-statistics over distinct particle tuples,
computed from power sums ``e_xi = sum_i exp(-2 pi i xi . X_i)`` by
inclusion-exclusion.  Marginals are averaged across replicas first and then
combined over set partitions into correlation coefficients; error bars come
from a replica jackknife.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .fourier import TWO_PI, SpectralField, box_frequencies
from .partitions import cumulant_weight, enumerate_partitions

MAX_ORDER = 3


# input validation ---------------------------------------------------------

def check_snapshots(X, dim: int | None = None) -> np.ndarray:
    """Return ``X`` as a float array of shape ``(R, N, d)`` with entries in [0, 1)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"snapshots must have shape (R, N, d) or (N, d), got {X.shape}")
    if dim is not None and X.shape[2] != dim:
        raise ValueError(f"snapshots have d={X.shape[2]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("snapshots contain non-finite values")
    if X.size and (X.min() < 0 or X.max() >= 1):
        raise ValueError("snapshot coordinates must lie in [0, 1)")
    return X


# frequency probes ---------------------------------------------------------

def _has_zero_var(xi: tuple[int, ...], m: int, d: int) -> bool:
    return any(not any(xi[k * d:(k + 1) * d]) for k in range(m))


@dataclass(frozen=True)
class FreqProbe:
    """Deduplicated frequency tuples ``(xi_1, .., xi_m)``, each flattened to ``m * d`` ints."""

    freqs: tuple
    m: int
    d: int = 1

    def __post_init__(self):
        seen = {}
        for xi in self.freqs:
            flat = tuple(int(v) for v in np.asarray(xi).reshape(-1))
            if len(flat) != self.m * self.d:
                raise ValueError(f"frequency {xi!r} does not have {self.m} variables of dim {self.d}")
            seen.setdefault(flat, None)
        if not seen:
            raise ValueError("probe is empty")
        object.__setattr__(self, "freqs", tuple(seen))

    @classmethod
    def box(cls, m: int, d: int = 1, cutoff: int = 1, include_zero_planes: bool = False) -> "FreqProbe":
        freqs = [xi for xi in box_frequencies(m, d, cutoff)
                 if include_zero_planes or not _has_zero_var(xi, m, d)]
        return cls(tuple(freqs), m, d)

    def __len__(self) -> int:
        return len(self.freqs)

    def zero_mask(self) -> np.ndarray:
        return np.array([_has_zero_var(xi, self.m, self.d) for xi in self.freqs])

    def split(self, xi: tuple[int, ...]) -> list[tuple[int, ...]]:
        return [xi[k * self.d:(k + 1) * self.d] for k in range(self.m)]


# power sums and U-statistics ------------------------------------------------

def _power_sum_array(X: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """``(R, n)`` array of ``sum_i exp(-2 pi i vec . X_i)`` for ``X`` of shape ``(R, N, d)``."""
    R, N, _ = X.shape
    out = np.empty((R, len(vecs)), dtype=np.complex128)
    if len(vecs) == 0:
        return out
    V = np.asarray(vecs, dtype=float).T
    rows = max(1, 2 ** 21 // max(1, N * len(vecs)))
    for s in range(0, R, rows):
        out[s:s + rows] = np.exp(-1j * TWO_PI * (X[s:s + rows] @ V)).sum(axis=1)
    return out


def power_sums(snapshot, freqs: Iterable) -> dict:
    """``{xi: sum_i exp(-2 pi i xi . X_i)}`` for one snapshot of shape ``(N, d)``."""
    X = check_snapshots(snapshot)
    if X.shape[0] != 1:
        raise ValueError("power_sums takes a single snapshot (N, d)")
    keys = [tuple(int(v) for v in np.atleast_1d(xi)) for xi in freqs]
    vals = _power_sum_array(X, np.array(keys, dtype=float).reshape(len(keys), X.shape[2]))[0]
    return {k: complex(v) for k, v in zip(keys, vals)}


def falling_factorial(N: int, j: int) -> int:
    return math.prod(range(N - j + 1, N + 1))


def _block_vec(parts: Sequence[tuple[int, ...]], block: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(sum(c)) for c in zip(*(parts[k] for k in block)))


def marginal_fourier_samples(snapshots, j: int, freqs: Sequence[tuple[int, ...]]) -> np.ndarray:
    """Per-replica U-statistics ``f^_j`` at ``j``-tuples of frequencies, shape ``(R, n)``.

    ``f^_j(xi_1..xi_j) = sum_pi prod_{B in pi} (-1)^(|B|-1) (|B|-1)! e_{xi_B} / (N)_j``
    with ``xi_B`` the sum of the frequencies in block ``B``.
    """
    X = check_snapshots(snapshots)
    R, N, d = X.shape
    if not 1 <= j <= MAX_ORDER:
        raise ValueError(f"marginal order must be in 1..{MAX_ORDER}")
    if N < j:
        raise ValueError(f"need at least j distinct particles (N={N}, j={j})")
    split = [[tuple(int(v) for v in xi[k * d:(k + 1) * d]) for k in range(j)] for xi in freqs]
    partitions = enumerate_partitions(j)
    index: dict[tuple[int, ...], int] = {}
    plan = []
    for parts in split:
        terms = []
        for pi in partitions:
            coef = 1
            cols = []
            for block in pi.blocks:
                coef *= cumulant_weight(len(block))
                v = _block_vec(parts, [b - 1 for b in block])
                cols.append(index.setdefault(v, len(index)))
            terms.append((coef, cols))
        plan.append(terms)
    vecs = np.array(list(index), dtype=float).reshape(len(index), d)
    e = _power_sum_array(X, vecs)
    out = np.zeros((R, len(freqs)), dtype=np.complex128)
    for n, terms in enumerate(plan):
        acc = np.zeros(R, dtype=np.complex128)
        for coef, cols in terms:
            prod = e[:, cols[0]]
            for c in cols[1:]:
                prod = prod * e[:, c]
            acc += coef * prod
        out[:, n] = acc
    return out / falling_factorial(N, j)


def empirical_marginal_fourier(snapshot, j: int, probe: FreqProbe | Sequence) -> dict:
    """``{(xi_1..xi_j): f^_j}`` for a single snapshot."""
    X = check_snapshots(snapshot)
    if X.shape[0] != 1:
        raise ValueError("empirical_marginal_fourier takes a single snapshot (N, d)")
    freqs = probe.freqs if isinstance(probe, FreqProbe) else [
        tuple(int(v) for v in np.asarray(xi).reshape(-1)) for xi in probe]
    vals = marginal_fourier_samples(X, j, freqs)[0]
    return {xi: complex(v) for xi, v in zip(freqs, vals)}


# correlations -------------------------------------------------------------

class _MarginalTable:
    """Per-replica marginal values at every sub-tuple a set of correlation probes needs."""

    def __init__(self, snapshots: np.ndarray, m: int, freqs: Sequence[tuple[int, ...]], d: int):
        self.m, self.d = m, d
        keys: dict[int, dict[tuple, int]] = {}
        self.plan = []
        for xi in freqs:
            parts = [xi[k * d:(k + 1) * d] for k in range(m)]
            terms = []
            for pi in enumerate_partitions(m):
                refs = []
                for block in pi.blocks:
                    sub = tuple(c for b in block for c in parts[b - 1])
                    table = keys.setdefault(len(block), {})
                    refs.append((len(block), table.setdefault(sub, len(table))))
                terms.append((cumulant_weight(len(pi)), refs))
            self.plan.append(terms)
        self.samples = {j: marginal_fourier_samples(snapshots, j, list(tab))
                        for j, tab in keys.items()}

    def combine(self, means: dict[int, np.ndarray]) -> np.ndarray:
        """Moebius combination; ``means[j]`` has shape ``(..., n_keys_j)``."""
        lead = next(iter(means.values())).shape[:-1]
        out = np.zeros(lead + (len(self.plan),), dtype=np.complex128)
        for n, terms in enumerate(self.plan):
            acc = np.zeros(lead, dtype=np.complex128)
            for coef, refs in terms:
                prod = means[refs[0][0]][..., refs[0][1]]
                for j, c in refs[1:]:
                    prod = prod * means[j][..., c]
                acc = acc + coef * prod
            out[..., n] = acc
        return out


def group_sums(samples: np.ndarray, groups: int | None) -> np.ndarray:
    """Sum replica rows into contiguous groups (``None`` keeps one row per replica)."""
    R = samples.shape[0]
    if groups is None or groups >= R:
        return samples
    edges = np.linspace(0, R, groups + 1).astype(int)
    return np.add.reduceat(samples, edges[:-1], axis=0)


def jackknife(estimator, samples: dict, groups: int | None = None):
    """Delete-one(-group) jackknife of ``estimator(means)`` over replica rows.

    ``samples`` maps keys to arrays whose first axis is the replica.  Returns
    ``(full-sample estimate, standard error of the real part, of the imaginary part)``.
    """
    R = next(iter(samples.values())).shape[0]
    G = R if groups is None or groups >= R else groups
    sizes = np.diff(np.linspace(0, R, G + 1).astype(int))
    totals = {k: v.sum(axis=0) for k, v in samples.items()}
    full = estimator({k: t / R for k, t in totals.items()})
    loo = {}
    for k, v in samples.items():
        g = group_sums(v, None if G == R else G)
        loo[k] = (totals[k] - g) / (R - sizes).reshape((G,) + (1,) * (v.ndim - 1))
    reps = np.asarray(estimator(loo))
    dev = reps - reps.mean(axis=0)
    factor = (G - 1) / G
    se_re = np.sqrt(factor * np.sum(dev.real ** 2, axis=0))
    se_im = np.sqrt(factor * np.sum(dev.imag ** 2, axis=0))
    return full, se_re, se_im


@dataclass
class ChaosEntry:
    m: int
    t: float
    freqs: tuple
    values: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    replicas: int
    d: int = 1
    N: int | None = None

    def zero_mask(self) -> np.ndarray:
        return np.array([_has_zero_var(xi, self.m, self.d) for xi in self.freqs])

    def se_abs(self) -> np.ndarray:
        """Delta-method standard error of ``|g|``."""
        a = np.abs(self.values)
        num = np.hypot(self.values.real * self.se_re, self.values.imag * self.se_im)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(a > 0, num / np.where(a > 0, a, 1.0), np.hypot(self.se_re, self.se_im))

    def value(self, xi) -> complex:
        key = tuple(int(v) for v in np.asarray(xi).reshape(-1))
        return complex(self.values[self.freqs.index(key)])

    def rows(self) -> list[list]:
        return [[self.m, float(self.t), " ".join(map(str, xi)), float(v.real), float(v.imag),
                 float(sr), float(si)]
                for xi, v, sr, si in zip(self.freqs, self.values, self.se_re, self.se_im)]


def estimate_correlations(snapshots, m: int, probe: FreqProbe, t: float = 0.0,
                          groups: int | None = None) -> ChaosEntry:
    """Replica-averaged ``g^_[m]`` at the probed frequencies with jackknife errors."""
    X = check_snapshots(snapshots)
    R, N, d = X.shape
    if not 1 <= m <= MAX_ORDER:
        raise ValueError(f"correlation order must be in 1..{MAX_ORDER}")
    if probe.m != m or probe.d != d:
        raise ValueError("probe does not match the correlation order or dimension")
    if R < 2:
        raise ValueError("need at least 2 replicas for error bars")
    table = _MarginalTable(X, m, probe.freqs, d)
    values, se_re, se_im = jackknife(table.combine, table.samples, groups)
    return ChaosEntry(m, t, probe.freqs, np.asarray(values), np.asarray(se_re), np.asarray(se_im),
                      R, d, N)


def per_snapshot_correlations(snapshots, m: int, probe: FreqProbe) -> np.ndarray:
    """``g^_[m]`` built from each snapshot's own U-statistics, shape ``(R, n_probe)``."""
    X = check_snapshots(snapshots)
    table = _MarginalTable(X, m, probe.freqs, X.shape[2])
    return table.combine(table.samples)


def estimate_correlation_fields(snapshots, cutoffs: dict[int, int]) -> dict[int, SpectralField]:
    """Replica-averaged ``g_k`` on full frequency boxes, ``cutoffs = {k: M_k}``."""
    X = check_snapshots(snapshots)
    d = X.shape[2]
    out = {}
    for k, M in cutoffs.items():
        probe = FreqProbe.box(k, d, M, include_zero_planes=True)
        table = _MarginalTable(X, k, probe.freqs, d)
        vals = table.combine({j: s.mean(axis=0) for j, s in table.samples.items()})
        out[k] = SpectralField.from_modes(dict(zip(probe.freqs, vals)), k, d, M,
                                          real=True)
    return out


# norms and scaling ----------------------------------------------------------

def chaos_norms(entry: ChaosEntry) -> dict[str, float]:
    """``linf`` and truncated ``l2`` over the probed frequencies without zero variables."""
    keep = ~entry.zero_mask() if entry.m >= 2 else np.ones(len(entry.freqs), bool)
    vals = entry.values[keep]
    if vals.size == 0:
        raise ValueError("no probed frequency without a zero variable")
    a = np.abs(vals)
    i = int(np.argmax(a))
    return {"linf": float(a[i]), "l2_truncated": float(np.sqrt(np.sum(a ** 2))),
            "linf_se": float(entry.se_abs()[keep][i]), "argmax": entry.freqs[int(np.flatnonzero(keep)[i])]}


def chaos_bound(m: int, N: int) -> float:
    """Uniform-in-time bound ``2 (m-1)! / (m^2 N^(m-1))`` on the l-hat-infinity size of chaos."""
    return 2.0 * math.factorial(m - 1) / (m * m * float(N) ** (m - 1))


@dataclass
class ScalingFit:
    slope: float
    slope_se: float
    intercept: float
    degenerate: bool
    Ns: tuple = field(default=())
    values: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"slope": self.slope, "slope_se": self.slope_se, "intercept": self.intercept,
                "degenerate": self.degenerate, "N": list(self.Ns), "values": list(self.values)}


def fit_scaling(Ns: Sequence[int], values: Sequence[float], ses: Sequence[float] | None = None,
                floor_sigmas: float = 2.0) -> ScalingFit:
    """Weighted least-squares slope of ``log value`` against ``log N``.

    Weights use the delta-method error ``se / value``.  The fit is flagged
    degenerate when every value sits within ``floor_sigmas`` errors of zero.
    """
    Ns = np.asarray(Ns, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(Ns) < 3:
        raise ValueError("scaling fit needs at least 3 values of N")
    if np.any(v <= 0):
        return ScalingFit(float("nan"), float("nan"), float("nan"), True, tuple(Ns), tuple(v))
    x, y = np.log(Ns), np.log(v)
    if ses is None:
        coef, cov = np.polyfit(x, y, 1, cov=True)
        degenerate = False
    else:
        s = np.asarray(ses, dtype=float)
        # exact values (zero error) get a large but finite weight
        sig = np.maximum(s / v, 1e-8)
        coef, cov = np.polyfit(x, y, 1, w=1.0 / sig, cov="unscaled")
        degenerate = bool(np.all(v <= floor_sigmas * s))
    return ScalingFit(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), degenerate,
                      tuple(int(n) for n in Ns), tuple(float(a) for a in v))


def scaling_study(config, Ns: Sequence[int], m: int, probe: FreqProbe, t: float,
                  block_size: int = 1000, threads: int = 1) -> tuple[ScalingFit, list[ChaosEntry]]:
    """Simulate each ``N`` from a template config and fit the decay of ``linf``."""
    from dataclasses import replace

    from .particles import run

    entries = []
    for N in Ns:
        cfg = replace(config, N=int(N), t_end=t, obs_times=(t,))
        (time, ens), = run(cfg, block_size=block_size, threads=threads)
        entries.append(estimate_correlations(ens.positions, m, probe, time))
    stats = [chaos_norms(e) for e in entries]
    fit = fit_scaling(Ns, [s["linf"] for s in stats], [s["linf_se"] for s in stats])
    return fit, entries


@dataclass
class ChaosReport:
    entries: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "m", "t", "xi", "re", "im", "se_re", "se_im"])
        for e in self.entries:
            for row in e.rows():
                w.writerow([e.N] + [repr(c) if isinstance(c, float) else c for c in row])
        return buf.getvalue()

    def summary(self) -> dict:
        out = []
        for e in self.entries:
            item = {"N": e.N, "m": e.m, "t": e.t, "replicas": e.replicas}
            if e.m == 1 or not e.zero_mask().all():
                nrm = chaos_norms(e)
                nrm["argmax"] = list(nrm["argmax"])
                item.update(nrm)
            if e.N is not None and e.m >= 2:
                item["bound"] = chaos_bound(e.m, e.N)
            out.append(item)
        return {"entries": out, "fits": {k: f.to_dict() for k, f in self.fits.items()}}


class CorrelationEstimator(BaseEstimator):
    """Estimate ``g^_[m]`` at a frequency probe from snapshots of shape ``(R, N, d)``.

    After ``fit``: ``values_``, ``se_re_``, ``se_im_``, ``norms_`` and ``entry_``.
    """

    def __init__(self, m: int = 2, cutoff: int = 1, include_zero_planes: bool = False,
                 jackknife_groups: int | None = None):
        self.m = m
        self.cutoff = cutoff
        self.include_zero_planes = include_zero_planes
        self.jackknife_groups = jackknife_groups

    def fit(self, X, y=None):
        X = check_snapshots(X)
        probe = FreqProbe.box(self.m, X.shape[2], self.cutoff, self.include_zero_planes)
        entry = estimate_correlations(X, self.m, probe, groups=self.jackknife_groups)
        self.entry_ = entry
        self.freqs_ = entry.freqs
        self.values_ = entry.values
        self.se_re_ = entry.se_re
        self.se_im_ = entry.se_im
        self.norms_ = chaos_norms(entry)
        return self
