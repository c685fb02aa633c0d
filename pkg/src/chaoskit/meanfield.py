"""Spectral solvers for the mean-field density and its pair correction.

Both solvers use Lawson (integrating-factor) Euler steps: the diffusion is
applied exactly through the heat semigroup and the bounded transport terms
are explicit,

    u_{n+1} = heat(u_n + dt * rhs(u_n), sigma, dt).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .fourier import (KernelSpec, SpectralField, apply_H, apply_S, heat_propagate,
                      norms, tensor_all, tensor_product)

BLOWUP_LINF = 1e6
B_FORMS = ("hierarchy", "g2-display", "b-display")


class BlowUpError(RuntimeError):
    pass


@dataclass
class PdeRunConfig:
    sigma: float
    dt: float
    t_end: float
    cutoff: int
    kernel: KernelSpec
    rho0: SpectralField
    obs_times: Sequence[float] = ()
    # which right-hand side to use for the pair correction, see solve_b
    b_form: str = "hierarchy"

    def violations(self) -> list[str]:
        errs = []
        if not self.dt > 0:
            errs.append(f"dt > 0 required (got {self.dt!r})")
        if not self.t_end >= 0:
            errs.append(f"t_end >= 0 required (got {self.t_end!r})")
        if not self.sigma >= 0:
            errs.append(f"sigma >= 0 required (got {self.sigma!r})")
        if self.cutoff < self.kernel.max_mode:
            errs.append(f"cutoff M={self.cutoff} is below the kernel's largest mode "
                        f"{self.kernel.max_mode}")
        if self.rho0.num_vars != 1 or self.rho0.dim != self.kernel.dim:
            errs.append("rho0 must be a one-variable field on the kernel's torus")
        elif self.rho0.coefficient((0,) * self.rho0.dim) != 1:
            errs.append("rho0 mode-0 coefficient must be exactly 1")
        if self.rho0.cutoff > self.cutoff:
            errs.append(f"rho0 has modes beyond the cutoff M={self.cutoff}")
        bad = [t for t in self.obs_times if not 0 <= t <= self.t_end]
        if bad:
            errs.append(f"obs_times must lie in [0, t_end]; offending {bad}")
        if self.b_form not in B_FORMS:
            errs.append(f"b_form must be one of {B_FORMS} (got {self.b_form!r})")
        return errs

    def validate(self) -> "PdeRunConfig":
        errs = self.violations()
        if errs:
            raise ValueError("invalid PdeRunConfig: " + "; ".join(errs))
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def obs_steps(self) -> list[int]:
        return sorted({int(round(t / self.dt)) for t in self.obs_times})

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "dt": self.dt, "t_end": self.t_end, "cutoff": self.cutoff,
                "obs_times": list(self.obs_times), "b_form": self.b_form,
                "kernel": self.kernel.to_dict(), "rho0": self.rho0.to_dict()}


def mv_rhs(rho: SpectralField, kernel: KernelSpec) -> SpectralField:
    """Transport term ``-div(rho int K(x, z) rho(z) dz)`` (diffusion excluded)."""
    return -apply_H(kernel, tensor_product(rho, rho), 0, star=1)


def _pin_mass(field_: SpectralField) -> SpectralField:
    c = np.array(field_.coeffs)
    c[(field_.cutoff,) * c.ndim] = 1.0
    return field_.with_coeffs(c, probability=True)


def _guard(field_: SpectralField, what: str, n: int, dt: float) -> None:
    size = norms(field_)["linf"]
    if not np.isfinite(size) or size > BLOWUP_LINF:
        raise BlowUpError(f"{what} blew up at step {n} (t={n * dt:.6g}): linf={size:.3g}; "
                          "reduce dt or raise sigma")


def solve_rho(config: PdeRunConfig, full: bool = False) -> list[tuple[float, SpectralField]]:
    """Integrate the mean-field equation; returns ``(t, rho)`` at obs_times, or every step."""
    config.validate()
    rho = _pin_mass(config.rho0.resized(config.cutoff))
    keep = None if full else set(config.obs_steps())
    out = []
    for n in range(config.n_steps + 1):
        if keep is None or n in keep:
            out.append((n * config.dt, rho))
        if n == config.n_steps:
            break
        rho = heat_propagate(rho + config.dt * mv_rhs(rho, config.kernel), config.sigma, config.dt)
        rho = _pin_mass(rho)
        _guard(rho, "rho", n + 1, config.dt)
    return out


def b_rhs(b: SpectralField, rho: SpectralField, kernel: KernelSpec,
          form: str = "hierarchy") -> SpectralField:
    """Right-hand side of the pair-correction equation, diffusion excluded.

    Variables are (x, y) with z integrated out.  ``"hierarchy"`` is the
    first-order expansion of the two-particle correlation equation::

        - H_x[rho(x) b(y,z)] - H_y[rho(y) b(x,z)]
        - H_x[b(x,y) rho(z)] - H_y[b(x,y) rho(z)]
        + H_x[rho(x) rho(y) rho(z)] + H_y[rho(x) rho(y) rho(z)]
        - S_xy[rho rho] - S_yx[rho rho]

    ``"g2-display"`` drops the two ``b(x,y) rho(z)`` terms and uses a minus
    sign on the cubic terms; ``"b-display"`` is the same with the sign of
    the ``H_y[rho(y) b(x,z)]`` term flipped.  Both are kept for comparison.
    """
    if form not in B_FORMS:
        raise ValueError(f"unknown b_form {form!r}")
    x_b = tensor_product(rho, b)                        # rho(x) b(y, z)
    y_b = tensor_product(rho, b).permute([1, 0, 2])     # rho(y) b(x, z)
    cube = tensor_all([rho, rho, rho])
    pair_rr = tensor_product(rho, rho)
    out = -apply_H(kernel, x_b, 0, star=2)
    transport_y = apply_H(kernel, y_b, 1, star=2)
    out = out + transport_y if form == "b-display" else out - transport_y
    if form == "hierarchy":
        b_z = tensor_product(b, rho)                    # b(x, y) rho(z)
        out = out - apply_H(kernel, b_z, 0, star=2) - apply_H(kernel, b_z, 1, star=2)
        out = out + apply_H(kernel, cube, 0, star=2) + apply_H(kernel, cube, 1, star=2)
    else:
        out = out - apply_H(kernel, cube, 0, star=2) - apply_H(kernel, cube, 1, star=2)
    out = out - apply_S(kernel, pair_rr, 0, 1) - apply_S(kernel, pair_rr, 1, 0)
    return out.resized(b.cutoff)


def solve_b(rho_traj: Sequence, config: PdeRunConfig) -> list[tuple[float, SpectralField]]:
    """Integrate the pair correction from ``b_0 = 0`` along a full rho trajectory.

    ``rho_traj`` holds ``(t, rho)`` pairs (or bare fields) for every step
    ``0..n_steps`` of the same grid, as returned by ``solve_rho(config, full=True)``.
    """
    config.validate()
    n_steps = config.n_steps
    if len(rho_traj) != n_steps + 1:
        raise ValueError(f"rho trajectory has {len(rho_traj)} entries, the grid needs {n_steps + 1}")
    rhos = []
    for n, entry in enumerate(rho_traj):
        if isinstance(entry, SpectralField):
            rhos.append(entry)
            continue
        t, rho = entry
        if abs(t - n * config.dt) > 1e-9 * max(1.0, config.t_end):
            raise ValueError(f"rho trajectory time {t} does not match grid time {n * config.dt}")
        rhos.append(rho)
    M = config.cutoff
    b = SpectralField.zeros(2, config.kernel.dim, M, real=True)
    keep = set(config.obs_steps())
    out = []
    for n in range(n_steps + 1):
        if n in keep:
            out.append((n * config.dt, b))
        if n == n_steps:
            break
        rho = rhos[n].resized(M)
        b = heat_propagate(b + config.dt * b_rhs(b, rho, config.kernel, config.b_form),
                           config.sigma, config.dt)
        _guard(b, "b", n + 1, config.dt)
    return out


def swap_error(b: SpectralField) -> float:
    """Max deviation from ``b(x, y) = b(y, x)``."""
    return float(np.max(np.abs(b.coeffs - b.permute([1, 0]).coeffs), initial=0.0))


def dump_trajectory(records: Sequence[tuple[float, SpectralField]], path, name: str = "rho") -> Path:
    """JSON lines, one ``{"t", "name", "field"}`` record per time."""
    path = Path(path)
    with path.open("w") as fh:
        for t, f in records:
            fh.write(json.dumps({"t": t, "name": name, "field": f.to_dict()}) + "\n")
    return path


def load_trajectory(path) -> list[tuple[float, SpectralField]]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append((rec["t"], SpectralField.from_dict(rec["field"])))
    return out
