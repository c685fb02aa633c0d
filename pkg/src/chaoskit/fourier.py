"""Truncated Fourier algebra on products of tori (T^d)^m.

A :class:`SpectralField` stores the Fourier coefficients of a function of
``m`` torus variables, each in ``T^d``, on the box ``|xi|_inf <= M``.  The
coefficient array is dense with one axis per (variable, component) pair,
variable-major, offset by ``M``.

Conventions: ``h(x) = sum_xi hhat(xi) exp(2 pi i sum_k xi_k . x_k)`` and
``hhat(xi) = int h(x) exp(-2 pi i xi . x) dx``.  Products and operator
applications are exact convolutions over the listed modes, truncated to the
output box (out-of-box contributions are dropped, never aliased).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def _freq_tuple(xi, m: int, d: int) -> tuple[int, ...]:
    """Flatten a frequency given as m vectors (or already flat) to a tuple."""
    flat = np.asarray(xi, dtype=np.int64).reshape(-1)
    if flat.size != m * d:
        raise ValueError(f"frequency {xi!r} does not have {m} variables of dimension {d}")
    return tuple(int(v) for v in flat)


def _shift(arr: np.ndarray, axes: Sequence[int], offsets: Sequence[int]) -> np.ndarray:
    """Return ``out`` with ``out[xi] = arr[xi - offset]`` along ``axes``, zero-filled."""
    out = np.zeros_like(arr)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    for ax, s in zip(axes, offsets):
        n = arr.shape[ax]
        if abs(s) >= n:
            return out
        if s >= 0:
            dst[ax] = slice(s, n)
            src[ax] = slice(0, n - s)
        else:
            dst[ax] = slice(0, n + s)
            src[ax] = slice(-s, n)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _pad_to(arr: np.ndarray, M_old: int, M_new: int) -> np.ndarray:
    if M_new == M_old:
        return arr
    if M_new < M_old:
        cut = M_old - M_new
        return arr[(slice(cut, arr.shape[0] - cut),) * arr.ndim]
    w = M_new - M_old
    return np.pad(arr, [(w, w)] * arr.ndim)


class SpectralField:
    """Fourier coefficients of a function on ``(T^d)^m`` truncated to ``|xi|_inf <= M``.

    Instances are immutable; every operation returns a new field.  ``real``
    marks conjugate-symmetric coefficient tables and ``probability`` marks
    real fields whose zero mode is exactly one.
    """

    __slots__ = ("coeffs", "num_vars", "dim", "cutoff", "real", "probability")

    def __init__(self, coeffs, num_vars: int, dim: int, *, real: bool = False,
                 probability: bool = False):
        coeffs = np.array(coeffs, dtype=np.complex128)
        if num_vars < 1 or dim < 1:
            raise ValueError("num_vars and dim must be positive")
        if coeffs.ndim != num_vars * dim:
            raise ValueError(
                f"coefficient array has {coeffs.ndim} axes, expected {num_vars * dim}")
        size = coeffs.shape[0]
        if size % 2 != 1 or any(s != size for s in coeffs.shape):
            raise ValueError("coefficient array must be a cube with odd side 2M+1")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.num_vars = int(num_vars)
        self.dim = int(dim)
        self.cutoff = (size - 1) // 2
        self.real = bool(real or probability)
        self.probability = bool(probability)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, num_vars: int, dim: int, cutoff: int, **tags) -> "SpectralField":
        shape = (2 * cutoff + 1,) * (num_vars * dim)
        return cls(np.zeros(shape, dtype=np.complex128), num_vars, dim, **tags)

    @classmethod
    def from_modes(cls, modes: Mapping, num_vars: int, dim: int, cutoff: int | None = None,
                   **tags) -> "SpectralField":
        """Build a field from ``{frequency: coefficient}``; cutoff defaults to the widest mode."""
        keyed = {_freq_tuple(k, num_vars, dim): complex(v) for k, v in modes.items()}
        if cutoff is None:
            cutoff = max((max(abs(c) for c in k) for k in keyed), default=0)
        arr = np.zeros((2 * cutoff + 1,) * (num_vars * dim), dtype=np.complex128)
        for k, v in keyed.items():
            if max(abs(c) for c in k) > cutoff:
                raise ValueError(f"mode {k} lies outside the cutoff box M={cutoff}")
            arr[tuple(c + cutoff for c in k)] += v
        return cls(arr, num_vars, dim, **tags)

    @classmethod
    def constant(cls, value: complex, num_vars: int = 1, dim: int = 1, cutoff: int = 0,
                 **tags) -> "SpectralField":
        zero = (0,) * (num_vars * dim)
        return cls.from_modes({zero: value}, num_vars, dim, cutoff, **tags)

    # access -------------------------------------------------------------
    @property
    def shape_side(self) -> int:
        return 2 * self.cutoff + 1

    def coefficient(self, xi) -> complex:
        """Coefficient at ``xi``; zero outside the box."""
        key = _freq_tuple(xi, self.num_vars, self.dim)
        if any(abs(c) > self.cutoff for c in key):
            return 0j
        return complex(self.coeffs[tuple(c + self.cutoff for c in key)])

    def nonzero_modes(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer frequencies (n, m*d) and values (n,) of the non-zero coefficients."""
        idx = np.argwhere(self.coeffs != 0)
        return idx - self.cutoff, self.coeffs[tuple(idx.T)]

    def items(self) -> Iterable[tuple[tuple[int, ...], complex]]:
        freqs, vals = self.nonzero_modes()
        for f, v in zip(freqs, vals):
            yield tuple(int(c) for c in f), complex(v)

    def axes_of(self, k: int) -> list[int]:
        """Array axes belonging to variable ``k``."""
        if not 0 <= k < self.num_vars:
            raise IndexError(f"variable index {k} out of range for m={self.num_vars}")
        return list(range(k * self.dim, (k + 1) * self.dim))

    def freq_grid(self, k: int) -> list[np.ndarray]:
        """Broadcastable integer grids of the components of ``xi_k``."""
        grids = []
        side = self.shape_side
        for ax in self.axes_of(k):
            shape = [1] * self.coeffs.ndim
            shape[ax] = side
            grids.append(np.arange(-self.cutoff, self.cutoff + 1).reshape(shape))
        return grids

    def with_coeffs(self, coeffs, num_vars: int | None = None, *, real: bool | None = None,
                    probability: bool = False) -> "SpectralField":
        return SpectralField(coeffs, self.num_vars if num_vars is None else num_vars,
                             self.dim, real=self.real if real is None else real,
                             probability=probability)

    def resized(self, cutoff: int) -> "SpectralField":
        """Zero-pad or truncate to a new cutoff."""
        return SpectralField(_pad_to(self.coeffs, self.cutoff, cutoff), self.num_vars,
                             self.dim, real=self.real, probability=self.probability)

    def permute(self, order: Sequence[int]) -> "SpectralField":
        """Reorder variables: output variable ``i`` is input variable ``order[i]``."""
        if sorted(order) != list(range(self.num_vars)):
            raise ValueError(f"{order!r} is not a permutation of the variables")
        axes = [ax for k in order for ax in self.axes_of(k)]
        return SpectralField(np.transpose(self.coeffs, axes), self.num_vars, self.dim,
                             real=self.real, probability=self.probability)

    def reflected(self) -> np.ndarray:
        """Coefficients at ``-xi``."""
        return self.coeffs[(slice(None, None, -1),) * self.coeffs.ndim]

    def conjugate_symmetry_error(self) -> float:
        return float(np.max(np.abs(self.coeffs - np.conj(self.reflected())), initial=0.0))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        a, b = _common(self, other)
        return SpectralField(a.coeffs + b.coeffs, a.num_vars, a.dim,
                             real=a.real and b.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        a, b = _common(self, other)
        return SpectralField(a.coeffs - b.coeffs, a.num_vars, a.dim,
                             real=a.real and b.real)

    def __mul__(self, scalar) -> "SpectralField":
        scalar = complex(scalar)
        return SpectralField(self.coeffs * scalar, self.num_vars, self.dim,
                             real=self.real and scalar.imag == 0)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self * -1.0

    def __repr__(self) -> str:
        return (f"SpectralField(m={self.num_vars}, d={self.dim}, M={self.cutoff}, "
                f"real={self.real}, probability={self.probability})")

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        coeffs = []
        for key, val in self.items():
            xi = [list(key[k * self.dim:(k + 1) * self.dim]) for k in range(self.num_vars)]
            coeffs.append([xi, val.real, val.imag])
        out = {"m": self.num_vars, "d": self.dim, "M": self.cutoff,
               "real_tag": self.real, "coeffs": coeffs}
        if self.probability:
            out["prob_tag"] = True
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SpectralField":
        unknown = set(data) - {"m", "d", "M", "real_tag", "prob_tag", "coeffs"}
        if unknown:
            raise ValueError(f"unknown SpectralField keys: {sorted(unknown)}")
        m, d, M = int(data["m"]), int(data["d"]), int(data["M"])
        modes: dict = {}
        for xi, re, im in data["coeffs"]:
            key = _freq_tuple(xi, m, d)
            modes[key] = modes.get(key, 0j) + complex(re, im)
        return cls.from_modes(modes, m, d, M, real=bool(data.get("real_tag", False)),
                              probability=bool(data.get("prob_tag", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _common(a: SpectralField, b: SpectralField) -> tuple[SpectralField, SpectralField]:
    if (a.num_vars, a.dim) != (b.num_vars, b.dim):
        raise ValueError("fields live on different spaces")
    M = max(a.cutoff, b.cutoff)
    return a.resized(M), b.resized(M)


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel ``K(x, y) = sum K^(lam, eta) exp(2 pi i (lam.x + eta.y))``.

    ``modes`` is a tuple of ``(lam, eta, coeff)`` with ``coeff`` a complex
    d-vector.  With ``real=True`` the mode list must be conjugate symmetric so
    that K is real vector-valued.
    """

    modes: tuple
    dim: int
    real: bool = True
    l1_mass: float = field(init=False)

    def __post_init__(self):
        clean = []
        for lam, eta, coef in self.modes:
            lam = tuple(int(v) for v in np.atleast_1d(lam))
            eta = tuple(int(v) for v in np.atleast_1d(eta))
            coef = np.atleast_1d(np.asarray(coef, dtype=np.complex128)).copy()
            if len(lam) != self.dim or len(eta) != self.dim or coef.shape != (self.dim,):
                raise ValueError(f"kernel mode {(lam, eta)} does not match dimension {self.dim}")
            coef.setflags(write=False)
            clean.append((lam, eta, coef))
        object.__setattr__(self, "modes", tuple(clean))
        if self.real:
            table = {(lam, eta): coef for lam, eta, coef in clean}
            for (lam, eta), coef in table.items():
                partner = table.get((tuple(-v for v in lam), tuple(-v for v in eta)))
                if partner is None or not np.allclose(partner, np.conj(coef), atol=1e-14):
                    raise ValueError(f"kernel is not conjugate symmetric at mode {(lam, eta)}")
        mass = float(sum(np.linalg.norm(coef) for _, _, coef in clean))
        object.__setattr__(self, "l1_mass", mass)

    @property
    def max_mode(self) -> int:
        return max((max(map(abs, lam + eta)) for lam, eta, _ in self.modes), default=0)

    def __call__(self, x, y) -> np.ndarray:
        """Evaluate K pointwise; ``x`` and ``y`` broadcast with trailing axis d."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = 0j
        for lam, eta, coef in self.modes:
            phase = np.exp(1j * TWO_PI * (x @ np.array(lam, float) + y @ np.array(eta, float)))
            out = out + phase[..., None] * coef
        return np.real_if_close(np.broadcast_to(out, np.broadcast_shapes(
            np.shape(x), np.shape(y))), tol=1e6)

    def to_dict(self) -> dict:
        return {"modes": [[list(lam), list(eta), [[c.real, c.imag] for c in coef]]
                          for lam, eta, coef in self.modes]}

    @classmethod
    def from_dict(cls, data: Mapping, real: bool = True) -> "KernelSpec":
        unknown = set(data) - {"modes"}
        if unknown:
            raise ValueError(f"unknown KernelSpec keys: {sorted(unknown)}")
        modes = []
        for lam, eta, coef in data["modes"]:
            modes.append((lam, eta, [complex(re, im) for re, im in coef]))
        if not modes:
            raise ValueError("kernel needs at least one mode; use zero_kernel for K=0")
        return cls(tuple(modes), dim=len(modes[0][0]), real=real)


def zero_kernel(dim: int = 1) -> KernelSpec:
    return KernelSpec((), dim=dim)


def kuramoto_kernel(coupling: float = 1.0) -> KernelSpec:
    """``K(x, y) = -coupling * sin(2 pi (x - y))`` on T^1; l1 mass equals ``|coupling|``."""
    c = 0.5j * coupling
    return KernelSpec((((1,), (-1,), [c]), ((-1,), (1,), [np.conj(c)])), dim=1)


def cosine_density(amplitude: float, freq: int = 1, dim: int = 1) -> SpectralField:
    """Probability density ``1 + amplitude * cos(2 pi freq x_1)`` on T^d."""
    if dim < 1:
        raise ValueError("dim must be positive")
    e = (freq,) + (0,) * (dim - 1)
    modes = {(0,) * dim: 1.0}
    if amplitude:
        modes[e] = amplitude / 2
        modes[tuple(-v for v in e)] = amplitude / 2
    return SpectralField.from_modes(modes, 1, dim, probability=True)


def uniform_density(dim: int = 1) -> SpectralField:
    return SpectralField.constant(1.0, 1, dim, probability=True)


# operations ---------------------------------------------------------------

def eval_field(field_: SpectralField, points) -> np.ndarray | complex:
    """Evaluate the trigonometric sum at points of shape ``(..., m, d)``."""
    pts = np.asarray(points, dtype=float)
    m, d = field_.num_vars, field_.dim
    if m * d == 1:
        # every entry is a point; a trailing (1, 1) is the explicit (m, d) layout
        lead = pts.shape[:-2] if pts.shape[-2:] == (1, 1) else pts.shape
        flat = pts.reshape(-1, 1)
    else:
        if pts.shape[-2:] != (m, d):
            if pts.ndim >= 1 and pts.shape[-1] == m * d:
                pts = pts.reshape(pts.shape[:-1] + (m, d))
            else:
                raise ValueError(f"points of shape {pts.shape} do not match m={m}, d={d}")
        lead = pts.shape[:-2]
        flat = pts.reshape(-1, m * d)
    freqs, vals = field_.nonzero_modes()
    out = np.zeros(flat.shape[0], dtype=np.complex128)
    if len(vals):
        fq = freqs.astype(float).T
        step = max(1, 2 ** 22 // max(1, len(vals)))
        for s in range(0, flat.shape[0], step):
            phase = np.exp(1j * TWO_PI * (flat[s:s + step] @ fq))
            out[s:s + step] = phase @ vals
    out = out.reshape(lead)
    return complex(out) if out.ndim == 0 else out


def _check_var(field_: SpectralField, k: int, name: str = "k") -> None:
    if not 0 <= k < field_.num_vars:
        raise IndexError(f"{name}={k} out of range for a field with {field_.num_vars} variables")


def _divergence_factor(field_: SpectralField, k: int, vec_parts: Sequence[np.ndarray]) -> np.ndarray:
    """Combine component arrays ``v_c`` into ``sum_c 2 pi i xi_k^c v_c``."""
    grids = field_.freq_grid(k)
    total = np.zeros_like(vec_parts[0])
    for g, v in zip(grids, vec_parts):
        total = total + (1j * TWO_PI) * g * v
    return total


def apply_H(kernel: KernelSpec, field_: SpectralField, k: int, star: int = -1) -> SpectralField:
    """Fourier side of ``div_{x_k} int K(x_k, x_*) h dx_*``; the star variable is removed.

    ``out(xi) = sum_{lam,eta} (2 pi i xi_k) . K^(lam,eta) h^(.., xi_k - lam, .., -eta)``.
    """
    m, d, M = field_.num_vars, field_.dim, field_.cutoff
    if m < 2:
        raise ValueError("apply_H needs a field with a star variable and at least one other")
    star = star % m if -m <= star < m else star
    _check_var(field_, star, "star")
    _check_var(field_, k)
    if k == star:
        raise ValueError("k must differ from the star variable")
    if kernel.dim != d:
        raise ValueError("kernel and field dimensions differ")
    out_vars = [v for v in range(m) if v != star]
    k_out = out_vars.index(k)
    out_shape = (2 * M + 1,) * ((m - 1) * d)
    parts = [np.zeros(out_shape, dtype=np.complex128) for _ in range(d)]
    star_axes = field_.axes_of(star)
    k_axes_out = list(range(k_out * d, (k_out + 1) * d))
    for lam, eta, coef in kernel.modes:
        if any(abs(e) > M for e in eta):
            continue
        index = [slice(None)] * field_.coeffs.ndim
        for ax, e in zip(star_axes, eta):
            index[ax] = -e + M
        sliced = field_.coeffs[tuple(index)]
        shifted = _shift(sliced, k_axes_out, lam)
        for c in range(d):
            if coef[c] != 0:
                parts[c] += coef[c] * shifted
    template = SpectralField.zeros(m - 1, d, M)
    out = _divergence_factor(template, k_out, parts)
    return SpectralField(out, m - 1, d, real=field_.real and kernel.real)


def apply_S(kernel: KernelSpec, field_: SpectralField, k: int, l: int) -> SpectralField:
    """Fourier side of ``div_{x_k} (K(x_k, x_l) h)``; ``k == l`` uses ``K(x_k, x_k)``."""
    _check_var(field_, k)
    _check_var(field_, l, "l")
    if kernel.dim != field_.dim:
        raise ValueError("kernel and field dimensions differ")
    d = field_.dim
    parts = [np.zeros_like(field_.coeffs) for _ in range(d)]
    k_axes, l_axes = field_.axes_of(k), field_.axes_of(l)
    for lam, eta, coef in kernel.modes:
        if k == l:
            shifted = _shift(field_.coeffs, k_axes, [a + b for a, b in zip(lam, eta)])
        else:
            shifted = _shift(field_.coeffs, k_axes + l_axes, list(lam) + list(eta))
        for c in range(d):
            if coef[c] != 0:
                parts[c] += coef[c] * shifted
    out = _divergence_factor(field_, k, parts)
    return field_.with_coeffs(out, real=field_.real and kernel.real)


def apply_inv_grad(field_: SpectralField, k: int) -> SpectralField:
    """Multiply by ``1/|2 pi xi_k|``, sending the plane ``xi_k = 0`` to zero."""
    _check_var(field_, k)
    sq = sum(g.astype(float) ** 2 for g in field_.freq_grid(k))
    norm = TWO_PI * np.sqrt(sq)
    with np.errstate(divide="ignore"):
        factor = np.where(norm > 0, 1.0 / np.where(norm > 0, norm, 1.0), 0.0)
    return field_.with_coeffs(field_.coeffs * factor)


def heat_exponent(field_: SpectralField) -> np.ndarray:
    """``(2 pi)^2 sum_k |xi_k|^2`` on the coefficient grid."""
    total = np.zeros((1,) * field_.coeffs.ndim)
    for k in range(field_.num_vars):
        for g in field_.freq_grid(k):
            total = total + g.astype(float) ** 2
    return TWO_PI ** 2 * total


def heat_propagate(field_: SpectralField, sigma: float, dt: float) -> SpectralField:
    """Apply the heat semigroup ``exp(sigma dt sum_k Laplacian_k)``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    factor = np.exp(-sigma * dt * heat_exponent(field_))
    return field_.with_coeffs(field_.coeffs * factor, probability=field_.probability)


def tensor_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Field on the disjoint union of variables: ``(f x g)^(xi_P, xi_Q) = f^(xi_P) g^(xi_Q)``."""
    if f.dim != g.dim:
        raise ValueError("cannot tensor fields over tori of different dimension")
    M = max(f.cutoff, g.cutoff)
    a = _pad_to(f.coeffs, f.cutoff, M)
    b = _pad_to(g.coeffs, g.cutoff, M)
    return SpectralField(np.multiply.outer(a, b), f.num_vars + g.num_vars, f.dim,
                         real=f.real and g.real, probability=f.probability and g.probability)


def tensor_all(fields: Sequence[SpectralField]) -> SpectralField:
    out = fields[0]
    for f in fields[1:]:
        out = tensor_product(out, f)
    return out


def convolve(f: SpectralField, g: SpectralField) -> SpectralField:
    """Coefficients of the pointwise product ``f g`` with the box grown to ``M_f + M_g``."""
    if (f.num_vars, f.dim) != (g.num_vars, g.dim):
        raise ValueError("fields live on different spaces")
    from scipy.signal import convolve as _conv

    out = _conv(f.coeffs, g.coeffs, method="direct")
    return SpectralField(out, f.num_vars, f.dim, real=f.real and g.real)


def power(f: SpectralField, n: int) -> SpectralField:
    """``f**n`` by repeated self-convolution (no truncation)."""
    if n < 1:
        raise ValueError("power needs n >= 1")
    out = f
    for _ in range(n - 1):
        out = convolve(out, f)
    return out


def pair(f: SpectralField, g: SpectralField) -> complex:
    """``int f g dx = sum_xi f^(xi) g^(-xi)`` over the common box."""
    if (f.num_vars, f.dim) != (g.num_vars, g.dim):
        raise ValueError("fields live on different spaces")
    M = min(f.cutoff, g.cutoff)
    a = _pad_to(f.coeffs, f.cutoff, M)
    b = _pad_to(g.reflected(), g.cutoff, M)
    return complex(np.sum(a * b))


def norms(field_: SpectralField) -> dict[str, float]:
    """Truncated Plancherel L2 norm and the l-hat-infinity norm."""
    absval = np.abs(field_.coeffs)
    return {"l2": float(np.sqrt(np.sum(absval ** 2))), "linf": float(absval.max(initial=0.0))}


def random_field(rng: np.random.Generator, num_vars: int, dim: int, cutoff: int,
                 real: bool = False) -> SpectralField:
    """Random complex Gaussian coefficients; conjugate-symmetrized when ``real``."""
    shape = (2 * cutoff + 1,) * (num_vars * dim)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if real:
        c = 0.5 * (c + np.conj(c[(slice(None, None, -1),) * c.ndim]))
    return SpectralField(c, num_vars, dim, real=real)


def random_kernel(rng: np.random.Generator, dim: int, n_modes: int, max_mode: int,
                  real: bool = True) -> KernelSpec:
    modes = {}
    for _ in range(n_modes):
        lam = tuple(int(v) for v in rng.integers(-max_mode, max_mode + 1, dim))
        eta = tuple(int(v) for v in rng.integers(-max_mode, max_mode + 1, dim))
        coef = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        modes[(lam, eta)] = coef
        if real:
            neg = (tuple(-v for v in lam), tuple(-v for v in eta))
            if neg == (lam, eta):
                modes[(lam, eta)] = coef.real.astype(complex)
            else:
                modes[neg] = np.conj(coef)
    return KernelSpec(tuple((lam, eta, c) for (lam, eta), c in modes.items()), dim=dim, real=real)


def box_frequencies(num_vars: int, dim: int, cutoff: int) -> list[tuple[int, ...]]:
    rng_ = range(-cutoff, cutoff + 1)
    return [tuple(x) for x in itertools.product(rng_, repeat=num_vars * dim)]
