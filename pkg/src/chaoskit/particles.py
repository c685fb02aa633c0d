"""Monte Carlo simulation of weakly interacting diffusions on the torus.

    dX_i = (1/N) sum_j K(X_i, X_j) dt + sqrt(2 sigma) dW_i

integrated by Euler-Maruyama with positions wrapped into [0, 1)^d.  The sum
over j includes j = i.  Every replica owns a PCG64 stream spawned from
``(seed, replica index)``, so results do not depend on block size or on the
number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fourier import TWO_PI, KernelSpec, SpectralField, eval_field

NEGATIVITY_GRID = 4096
# time steps of noise drawn per replica at once; part of the stream layout
NOISE_CHUNK = 32


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))


@dataclass
class SimConfig:
    N: int
    sigma: float
    dt: float
    t_end: float
    kernel: KernelSpec
    rho0: SpectralField
    obs_times: Sequence[float] = (0.0,)
    replicas: int = 1
    seed: int = 0
    d: int = 1
    drift_mode: str = "spectral"

    def violations(self) -> list[str]:
        errs = []
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 2):
            errs.append(f"N >= 2 required (got {self.N!r})")
        if not self.dt > 0:
            errs.append(f"dt > 0 required (got {self.dt!r})")
        if not self.t_end >= 0:
            errs.append(f"t_end >= 0 required (got {self.t_end!r})")
        if not self.sigma >= 0:
            errs.append(f"sigma >= 0 required (got {self.sigma!r})")
        if not (isinstance(self.replicas, (int, np.integer)) and self.replicas >= 1):
            errs.append(f"replicas >= 1 required (got {self.replicas!r})")
        bad = [t for t in self.obs_times if not 0 <= t <= self.t_end]
        if bad:
            errs.append(f"obs_times must lie in [0, t_end]; offending {bad}")
        if not 0 <= int(self.seed) < 2 ** 64:
            errs.append("seed must be a 64-bit unsigned integer")
        if self.drift_mode not in ("spectral", "direct"):
            errs.append(f"drift_mode must be 'spectral' or 'direct' (got {self.drift_mode!r})")
        if self.kernel.dim != self.d:
            errs.append(f"kernel dimension {self.kernel.dim} differs from d={self.d}")
        if not self.kernel.real:
            errs.append("kernel must be real (conjugate-symmetric modes)")
        r = self.rho0
        if r.num_vars != 1 or r.dim != self.d:
            errs.append("rho0 must be a one-variable field on T^d")
        else:
            if not r.real or r.conjugate_symmetry_error() > 1e-14:
                errs.append("rho0 must be real (conjugate symmetric)")
            if r.coefficient((0,) * self.d) != 1:
                errs.append("rho0 mode-0 coefficient must be exactly 1")
        return errs

    def validate(self) -> "SimConfig":
        errs = self.violations()
        if errs:
            raise ValueError("invalid SimConfig: " + "; ".join(errs))
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def obs_steps(self) -> list[int]:
        return sorted({int(round(t / self.dt)) for t in self.obs_times})

    def to_dict(self) -> dict:
        return {"N": int(self.N), "d": self.d, "sigma": self.sigma, "dt": self.dt,
                "t_end": self.t_end, "obs_times": list(self.obs_times),
                "replicas": int(self.replicas), "seed": int(self.seed),
                "drift_mode": self.drift_mode, "kernel": self.kernel.to_dict(),
                "rho0": self.rho0.to_dict()}


@dataclass
class Ensemble:
    """Positions ``(R, N, d)`` of replicas ``first_replica .. first_replica + R - 1``."""

    positions: np.ndarray
    time: float
    seed: int
    first_replica: int = 0
    rngs: list | None = field(default=None, repr=False)

    @property
    def replicas(self) -> int:
        return self.positions.shape[0]

    def snapshot(self) -> "Ensemble":
        return Ensemble(self.positions.copy(), self.time, self.seed, self.first_replica)

    def lineage(self) -> dict:
        return {"generator": "PCG64", "seed_sequence": "SeedSequence(seed, spawn_key=(replica,))",
                "seed": int(self.seed), "first_replica": int(self.first_replica),
                "replicas": int(self.replicas)}


# initial law ----------------------------------------------------------------

def _grid_points(d: int, total: int = NEGATIVITY_GRID) -> np.ndarray:
    per_axis = max(2, int(round(total ** (1.0 / d))))
    axes = [np.arange(per_axis) / per_axis] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def check_density(rho0: SpectralField) -> float:
    """Minimum of ``rho0`` on the verification grid; raises if negative."""
    values = eval_field(rho0, _grid_points(rho0.dim)[:, None, :])
    low = float(np.min(np.real(values)))
    if low < 0:
        raise ValueError(f"rho0 is negative on the verification grid (min {low:.3g})")
    return low


def sample_initial(rho0: SpectralField, N: int, rng: np.random.Generator,
                   envelope: float | None = None) -> np.ndarray:
    """I.i.d. draws from ``rho0`` by rejection against a constant envelope.

    The default envelope is the l1 norm of the Fourier coefficients, which
    bounds the density from above.
    """
    d = rho0.dim
    _, vals = rho0.nonzero_modes()
    bound = float(np.sum(np.abs(vals))) if envelope is None else float(envelope)
    if len(vals) == 1:
        return rng.random((N, d))
    check_density(rho0)
    out = np.empty((0, d))
    while out.shape[0] < N:
        need = N - out.shape[0]
        batch = max(16, int(1.2 * need * bound) + 8)
        cand = rng.random((batch, d))
        u = rng.random(batch) * bound
        dens = np.real(eval_field(rho0, cand[:, None, :]))
        out = np.concatenate([out, cand[u < dens]])
    return out[:N]


# drift ----------------------------------------------------------------------

def _drift_direct(X: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    out = np.zeros_like(X)
    for lam, eta, coef in kernel.modes:
        a = np.exp(1j * TWO_PI * (X @ np.array(lam, float)))
        b = np.exp(1j * TWO_PI * (X @ np.array(eta, float)))
        # full pairwise table, deliberately O(N^2)
        pair = a[..., :, None] * b[..., None, :]
        out += np.real(np.mean(pair, axis=-1)[..., None] * coef)
    return out


def _wave(X: np.ndarray, v: tuple) -> np.ndarray:
    """``exp(2 pi i v . x)`` for positions ``(..., N, d)``."""
    if len(v) == 1:
        arg = X[..., 0] * (TWO_PI * v[0])
    else:
        arg = TWO_PI * (X @ np.array(v, float))
    w = np.empty(arg.shape, dtype=np.complex128)
    np.cos(arg, out=w.real)
    np.sin(arg, out=w.imag)
    return w


def _drift_spectral(X: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    # one wave per distinct frequency vector up to sign
    cache: dict[tuple, np.ndarray] = {}

    def wave(v):
        if not any(v):
            return None
        key = max(v, tuple(-c for c in v))
        if key not in cache:
            cache[key] = _wave(X, key)
        w = cache[key]
        return w if key == v else np.conj(w)

    out = np.zeros_like(X)
    done = set()
    for lam, eta, coef in kernel.modes:
        if (lam, eta) in done:
            continue
        partner = (tuple(-c for c in lam), tuple(-c for c in eta))
        # a conjugate pair contributes twice the real part of one member
        factor = 2.0 if kernel.real and partner != (lam, eta) else 1.0
        done.add((lam, eta))
        done.add(partner)
        a, b = wave(lam), wave(eta)
        mean_b = 1.0 if b is None else np.mean(b, axis=-1, keepdims=True)
        term = np.broadcast_to(mean_b, X.shape[:-1]) if a is None else a * mean_b
        for c in range(X.shape[-1]):
            if coef[c] != 0:
                out[..., c] += factor * (coef[c].real * term.real - coef[c].imag * term.imag)
    return out


def drift(positions, kernel: KernelSpec, mode: str = "spectral") -> np.ndarray:
    """Mean-field drift ``(1/N) sum_j K(X_i, X_j)`` for positions ``(..., N, d)``."""
    X = np.asarray(positions, dtype=float)
    if X.ndim < 2 or X.shape[-1] != kernel.dim:
        raise ValueError(f"positions of shape {X.shape} do not match kernel dimension {kernel.dim}")
    if not kernel.modes:
        return np.zeros_like(X)
    if mode == "direct":
        return _drift_direct(X, kernel)
    if mode == "spectral":
        return _drift_spectral(X, kernel)
    raise ValueError(f"unknown drift mode {mode!r}")


# time stepping ----------------------------------------------------------------

def initial_ensemble(config: SimConfig, first_replica: int = 0, count: int | None = None) -> Ensemble:
    config.validate()
    count = config.replicas - first_replica if count is None else count
    rngs = [replica_rng(config.seed, r) for r in range(first_replica, first_replica + count)]
    X = np.stack([sample_initial(config.rho0, config.N, g) for g in rngs])
    return Ensemble(X, 0.0, int(config.seed), first_replica, rngs)


def _advance(X, noise, config: SimConfig):
    X = X + drift(X, config.kernel, config.drift_mode) * config.dt
    if config.sigma > 0:
        X = X + math.sqrt(2.0 * config.sigma * config.dt) * noise
    return np.mod(X, 1.0, out=X)


def step(ensemble: Ensemble, config: SimConfig) -> Ensemble:
    """One Euler-Maruyama step; draws one ``(N, d)`` normal block per replica."""
    if ensemble.rngs is None:
        raise ValueError("ensemble has no RNG state (it is a snapshot)")
    noise = np.stack([g.standard_normal(ensemble.positions.shape[1:]) for g in ensemble.rngs])
    X = _advance(ensemble.positions.copy(), noise, config)
    # guard against x mod 1 rounding up to exactly 1.0
    X[X >= 1.0] = 0.0
    return Ensemble(X, ensemble.time + config.dt, ensemble.seed, ensemble.first_replica,
                    ensemble.rngs)


def _run_block(config: SimConfig, first: int, count: int, obs: list[int]) -> dict[int, np.ndarray]:
    ens = initial_ensemble(config, first, count)
    X, rngs = ens.positions, ens.rngs
    shape = X.shape[1:]
    taken = {}
    if 0 in obs:
        taken[0] = X.copy()
    last = max(obs, default=0)
    n = 0
    while n < last:
        chunk = min(NOISE_CHUNK, last - n)
        noise = np.stack([g.standard_normal((chunk,) + shape) for g in rngs], axis=1)
        for s in range(chunk):
            X = _advance(X, noise[s], config)
            X[X >= 1.0] = 0.0
            n += 1
            if n in obs:
                taken[n] = X.copy()
    return taken


def run(config: SimConfig, block_size: int = 1000, threads: int = 1) -> list[tuple[float, Ensemble]]:
    """Integrate every replica to ``t_end`` and return snapshots at ``obs_times``.

    Observation times snap to the nearest step.  Replicas are processed in
    independent blocks, optionally on a thread pool.
    """
    config.validate()
    obs = config.obs_steps()
    starts = list(range(0, config.replicas, block_size))
    counts = [min(block_size, config.replicas - s) for s in starts]
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _run_block(config, *a, obs), zip(starts, counts)))
    else:
        parts = [_run_block(config, s, c, obs) for s, c in zip(starts, counts)]
    out = []
    for n in obs:
        X = np.concatenate([p[n] for p in parts])
        out.append((n * config.dt, Ensemble(X, n * config.dt, int(config.seed), 0)))
    return out


# snapshot dump ------------------------------------------------------------------

def dump_snapshot(ensemble: Ensemble, path, config: SimConfig | None = None) -> tuple[Path, Path]:
    """Write positions as ``.npy`` (replica, particle, coordinate) plus a JSON header."""
    path = Path(path)
    data_path = path.with_suffix(".npy")
    header_path = path.with_suffix(".json")
    np.save(data_path, ensemble.positions)
    header = {"time": ensemble.time, "shape": list(ensemble.positions.shape),
              "layout": ["replica", "particle", "coordinate"], "rng": ensemble.lineage()}
    if config is not None:
        header["config"] = config.to_dict()
    header_path.write_text(json.dumps(header, indent=2))
    return data_path, header_path


def load_snapshot(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    return np.load(path.with_suffix(".npy")), json.loads(path.with_suffix(".json").read_text())
