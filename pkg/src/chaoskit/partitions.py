"""Set-partition lattice: enumeration, Moebius inversion and the K_N weights.

Partitions act on the ground set ``{1, ..., m}``.  ``sigma <= pi`` means
``pi`` refines ``sigma`` (``sigma`` is coarser), so the top of the lattice
is the all-singletons partition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, Mapping, Sequence

from .fourier import SpectralField, tensor_all

MAX_ENUMERATION = 12


@dataclass(frozen=True)
class SetPartition:
    """A partition of ``{1..m}`` in canonical form (sorted blocks, ordered by least element)."""

    blocks: tuple[tuple[int, ...], ...]
    m: int

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(int(e) for e in b)) for b in self.blocks),
                              key=lambda b: b[0] if b else 0))
        if any(len(b) == 0 for b in blocks):
            raise ValueError("blocks must be non-empty")
        elements = [e for b in blocks for e in b]
        if sorted(elements) != list(range(1, self.m + 1)):
            raise ValueError(f"blocks {self.blocks!r} do not partition {{1..{self.m}}}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]]) -> "SetPartition":
        return cls(tuple(tuple(b) for b in blocks), sum(len(b) for b in blocks))

    @classmethod
    def from_rgs(cls, rgs: Sequence[int]) -> "SetPartition":
        groups: dict[int, list[int]] = {}
        for i, label in enumerate(rgs, start=1):
            groups.setdefault(label, []).append(i)
        return cls(tuple(tuple(v) for v in groups.values()), len(rgs))

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def to_json(self) -> str:
        return json.dumps([list(b) for b in self.blocks])

    @classmethod
    def from_json(cls, text: str) -> "SetPartition":
        return cls.from_blocks(json.loads(text))

    def __str__(self) -> str:
        return "{" + ", ".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks) + "}"


def _rgs(m: int) -> Iterator[tuple[int, ...]]:
    """Restricted growth strings of length m in lexicographic order."""
    a = [0] * m
    b = [1] * m  # b[i] = 1 + max(a[:i])
    while True:
        yield tuple(a)
        i = m - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i <= 0:
            return
        a[i] += 1
        for j in range(i + 1, m):
            a[j] = 0
            b[j] = max(b[j - 1], a[j - 1] + 1)


@lru_cache(maxsize=None)
def _rgs_list(m: int) -> tuple[tuple[int, ...], ...]:
    return tuple(_rgs(m))


def enumerate_partitions(m: int) -> list[SetPartition]:
    """All partitions of ``{1..m}``, in restricted-growth-string order."""
    if not 1 <= m <= MAX_ENUMERATION:
        raise ValueError(f"m must lie in [1, {MAX_ENUMERATION}], got {m}")
    return [SetPartition.from_rgs(r) for r in _rgs_list(m)]


def bell_number(m: int) -> int:
    """Bell number by the Bell triangle."""
    if m < 0:
        raise ValueError("m must be non-negative")
    row = [1]
    for _ in range(m):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def refines(sigma: SetPartition, pi: SetPartition) -> bool:
    """True iff every block of ``pi`` lies inside a block of ``sigma`` (``sigma <= pi``)."""
    if sigma.m != pi.m:
        raise ValueError("partitions of different ground sets")
    owner = {}
    for idx, block in enumerate(sigma.blocks):
        for e in block:
            owner[e] = idx
    return all(len({owner[e] for e in block}) == 1 for block in pi.blocks)


def coarsenings(rho: SetPartition) -> Iterator[SetPartition]:
    """Every ``iota >= rho`` in the sense of merging blocks of ``rho``."""
    k = len(rho.blocks)
    for rgs in _rgs_list(k):
        groups: dict[int, list[int]] = {}
        for label, block in zip(rgs, rho.blocks):
            groups.setdefault(label, []).extend(block)
        yield SetPartition(tuple(tuple(v) for v in groups.values()), rho.m)


def cumulant_weight(k: int) -> int:
    """Moebius weight ``(-1)^(k-1) (k-1)!`` of a partition with k blocks."""
    return (-1) ** (k - 1) * math.factorial(k - 1)


def mobius_identity_check(pi: SetPartition) -> int:
    """``sum over sigma coarser than pi of (-1)^(|sigma|-1) (|sigma|-1)!``; 1 iff |pi| = 1."""
    return sum(cumulant_weight(len(s)) for s in coarsenings(pi))


# Moebius inversion between marginals and correlations -----------------------

def _lookup(fields: Mapping, block: tuple[int, ...], what: str) -> SpectralField:
    for key in (frozenset(block), tuple(block), len(block)):
        try:
            return fields[key]
        except (KeyError, TypeError):
            continue
    raise KeyError(f"missing {what} for variables {block}")


def _assemble(fields: Mapping, m: int, weight: Callable[[int], int], what: str) -> SpectralField:
    total = None
    for pi in enumerate_partitions(m):
        parts = [_lookup(fields, block, what) for block in pi.blocks]
        for block, f in zip(pi.blocks, parts):
            if f.num_vars != len(block):
                raise ValueError(f"{what} for {block} has {f.num_vars} variables")
        term = tensor_all(parts)
        placed = [e for block in pi.blocks for e in block]
        order = [placed.index(v) for v in range(1, m + 1)]
        term = term.permute(order) * weight(len(pi))
        total = term if total is None else total + term
    return total


def marginals_to_correlations(f: Mapping, m: int) -> SpectralField:
    """``g_[m] = sum_pi (-1)^(|pi|-1) (|pi|-1)! prod_{P in pi} f_P``.

    ``f`` maps a cardinality (exchangeable case) or a tuple/frozenset of
    1-based variable labels to the marginal on those variables.
    """
    return _assemble(f, m, cumulant_weight, "marginal")


def correlations_to_marginals(g: Mapping, j: int) -> SpectralField:
    """``f_[j] = sum_pi prod_{P in pi} g_P``."""
    return _assemble(g, j, lambda k: 1, "correlation")


def moebius_combine(values: Callable[[tuple[int, ...]], object], m: int,
                    weight: Callable[[int], int] = cumulant_weight):
    """Scalar or array version: ``sum_pi weight(|pi|) prod_{B in pi} values(B)``."""
    total = 0
    for pi in enumerate_partitions(m):
        term = weight(len(pi))
        for block in pi.blocks:
            term = term * values(block)
        total = total + term
    return total


def moments_to_cumulants(moments: Sequence) -> list:
    """Cumulants from raw moments ``mu_1..mu_m`` via the partition formula.

    Entries may be ints, Fractions, floats or numpy arrays (evaluated
    element-wise).
    """
    if len(moments) == 0:
        raise ValueError("need at least one moment")
    return [moebius_combine(lambda b: moments[len(b) - 1], m) for m in range(1, len(moments) + 1)]


def cumulants_to_moments(cumulants: Sequence) -> list:
    if len(cumulants) == 0:
        raise ValueError("need at least one cumulant")
    return [moebius_combine(lambda b: cumulants[len(b) - 1], m, lambda k: 1)
            for m in range(1, len(cumulants) + 1)]


# K_N(rho) and its polynomial -------------------------------------------------

def _coarsened_sizes(sizes: Sequence[int]) -> Iterator[list[int]]:
    """Block sizes of every coarsening of a partition with the given block sizes."""
    for rgs in _rgs_list(len(sizes)):
        acc = [0] * (max(rgs) + 1)
        for label, s in zip(rgs, sizes):
            acc[label] += s
        yield acc


def K_N_many(rho: SetPartition, Ns: Sequence[int]) -> list[Fraction]:
    """``K_N(rho)`` for several N in one pass over the coarsenings, exactly."""
    if any(N < 1 for N in Ns):
        raise ValueError("N must be a positive integer")
    m = rho.m
    numerators = [0] * len(Ns)
    for merged in _coarsened_sizes(rho.block_sizes()):
        w = cumulant_weight(len(merged))
        for i, N in enumerate(Ns):
            prod = w * N ** (len(merged) - 1)
            for c in merged:
                for r in range(1, c):
                    prod *= N - r
            numerators[i] += prod
    return [Fraction(num, N ** (m - 1)) for num, N in zip(numerators, Ns)]


def K_N_eval(rho: SetPartition, N: int) -> Fraction:
    """``sum_{iota >= rho} (-1)^(|iota|-1)(|iota|-1)! prod_C prod_{r<|C|} (1 - r/N)``, exactly.

    Every product is scaled by ``N^(m-1)`` so the sum runs over integers.
    """
    return K_N_many(rho, [N])[0]


@dataclass(frozen=True)
class IntPolynomial:
    """Polynomial with integer coefficients ``C_0 + C_1 x + ...`` (trailing zeros trimmed)."""

    coeffs: tuple[int, ...]

    def __post_init__(self):
        c = list(int(v) for v in self.coeffs)
        while c and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, l: int) -> int:
        return self.coeffs[l] if 0 <= l < len(self.coeffs) else 0

    def __call__(self, x):
        out = 0
        for c in reversed(self.coeffs):
            out = out * x + c
        return out

    def __add__(self, other: "IntPolynomial") -> "IntPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        return IntPolynomial(tuple(self.coefficient(i) + other.coefficient(i) for i in range(n)))

    def __mul__(self, other) -> "IntPolynomial":
        if isinstance(other, int):
            return IntPolynomial(tuple(other * c for c in self.coeffs))
        out = [0] * max(0, len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return IntPolynomial(tuple(out))

    __rmul__ = __mul__

    def abs_sum(self) -> int:
        return sum(abs(c) for c in self.coeffs)


def falling_polynomial(k: int) -> IntPolynomial:
    """``(1 - x)(1 - 2x)...(1 - (k-1)x)``."""
    out = IntPolynomial((1,))
    for r in range(1, k):
        out = out * IntPolynomial((1, -r))
    return out


@lru_cache(maxsize=None)
def _falling_product(sizes: tuple[int, ...]) -> IntPolynomial:
    out = IntPolynomial((1,))
    for c in sizes:
        out = out * falling_polynomial(c)
    return out


def K_polynomial(rho: SetPartition) -> IntPolynomial:
    """``K(x, rho)`` with ``K(1/N, rho) = K_N(rho)``."""
    total = IntPolynomial(())
    for merged in _coarsened_sizes(rho.block_sizes()):
        total = total + cumulant_weight(len(merged)) * _falling_product(tuple(sorted(merged)))
    return total


def partition_count_bound(L: int) -> int:
    """Crude count bound ``2^(L-1) L!`` on the number of partitions of an L-set."""
    return 2 ** (L - 1) * math.factorial(L)
