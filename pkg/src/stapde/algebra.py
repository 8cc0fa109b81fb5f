"""Signature-generic Clifford algebra: blades, Cayley tables, geometric product.

A basis blade is a product of distinct basis vectors and is indexed by a
bitmask (bit i set <=> basis vector i present). Blades are stored in ascending
bitmask order, so index 0 is the scalar and index 2**dim - 1 the pseudoscalar,
and the product of blades a and b always lands on blade a ^ b. The sign of
that product is precomputed once per signature in a Cayley table; every
multivector operation in the package routes through it.

Coefficients here are float64; the tensor layer may downcast to float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ParseError, UsageError

MAX_DIM = 6  # table size 4**dim; 6 keeps it at 4096 entries


@dataclass(frozen=True)
class Signature:
    """Metric signature: one entry in {+1, -1, 0} per basis vector."""

    metric: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.metric) <= MAX_DIM:
            raise ConfigError(f"dimension must be 1..{MAX_DIM}, got {len(self.metric)}")
        if any(m not in (1, -1, 0) for m in self.metric):
            raise ConfigError(f"metric entries must be +1, -1 or 0, got {self.metric}")

    @property
    def dim(self) -> int:
        return len(self.metric)

    @property
    def n_blades(self) -> int:
        return 1 << len(self.metric)


# The four algebras the models and datasets use. "ga" are Euclidean algebras,
# "sta" put the timelike vector (square +1) first at index 0.
ALGEBRAS: dict[str, Signature] = {
    "ga2": Signature((1, 1)),
    "ga3": Signature((1, 1, 1)),
    "sta2": Signature((1, -1, -1)),
    "sta3": Signature((1, -1, -1, -1)),
}


def algebra_by_name(name: str) -> Signature:
    try:
        return ALGEBRAS[name]
    except KeyError:
        raise ConfigError(f"unknown algebra {name!r}; expected one of {sorted(ALGEBRAS)}") from None


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _reorder_sign(a: int, b: int) -> int:
    """Parity sign from sorting the concatenated vector lists of blades a, b.

    Counts pairs (i in a, j in b) with i > j; each such pair is one
    transposition when merging the two ascending index lists.
    """
    a >>= 1
    swaps = 0
    while a:
        swaps += _popcount(a & b)
        a >>= 1
    return -1 if swaps & 1 else 1


@dataclass(frozen=True)
class CayleyTable:
    """Blade-product table: result[a, b] = a ^ b, sign[a, b] in {-1, 0, +1}.

    Immutable after construction; safe to share across threads.
    """

    signature: Signature
    sign: np.ndarray = field(repr=False)  # (2**dim, 2**dim) int8
    result: np.ndarray = field(repr=False)  # (2**dim, 2**dim) uint8

    @property
    def n_blades(self) -> int:
        return self.signature.n_blades


@lru_cache(maxsize=None)
def _build_table_cached(metric: tuple[int, ...]) -> CayleyTable:
    sig = Signature(metric)
    n = sig.n_blades
    sign = np.zeros((n, n), dtype=np.int8)
    result = np.zeros((n, n), dtype=np.uint8)
    for a in range(n):
        for b in range(n):
            s = _reorder_sign(a, b)
            common = a & b
            while common:
                i = (common & -common).bit_length() - 1
                s *= metric[i]
                common &= common - 1
            sign[a, b] = s
            result[a, b] = a ^ b
    sign.setflags(write=False)
    result.setflags(write=False)
    return CayleyTable(sig, sign, result)


def build_table(sig: Signature) -> CayleyTable:
    """Cayley table for `sig`, cached per metric."""
    return _build_table_cached(sig.metric)


@dataclass
class Multivector:
    """Dense multivector: one float64 coefficient per basis blade."""

    signature: Signature
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.signature.n_blades,):
            raise UsageError(
                f"coeffs must have length {self.signature.n_blades}, got {self.coeffs.shape}"
            )

    @classmethod
    def zero(cls, sig: Signature) -> "Multivector":
        return cls(sig, np.zeros(sig.n_blades))

    @classmethod
    def scalar(cls, sig: Signature, value: float) -> "Multivector":
        c = np.zeros(sig.n_blades)
        c[0] = value
        return cls(sig, c)

    @classmethod
    def blade(cls, sig: Signature, bits: int, value: float = 1.0) -> "Multivector":
        c = np.zeros(sig.n_blades)
        c[bits] = value
        return cls(sig, c)

    def __add__(self, other: "Multivector") -> "Multivector":
        _check_signature(self, other)
        return Multivector(self.signature, self.coeffs + other.coeffs)

    def __sub__(self, other: "Multivector") -> "Multivector":
        _check_signature(self, other)
        return Multivector(self.signature, self.coeffs - other.coeffs)

    def __rmul__(self, s: float) -> "Multivector":
        return Multivector(self.signature, s * self.coeffs)

    def __repr__(self):
        terms = [
            f"{c:+g}*{blade_name(b, self.signature)}"
            for b, c in enumerate(self.coeffs)
            if c != 0.0
        ]
        return " ".join(terms) if terms else "0"


def _check_signature(a: Multivector, b: Multivector) -> None:
    if a.signature != b.signature:
        raise UsageError(f"signature mismatch: {a.signature} vs {b.signature}")


def gp(a: Multivector, b: Multivector) -> Multivector:
    """Geometric product, expanded bilinearly over the Cayley table."""
    _check_signature(a, b)
    table = build_table(a.signature)
    prod = np.outer(a.coeffs, b.coeffs) * table.sign
    out = np.zeros(a.signature.n_blades)
    np.add.at(out, table.result.ravel().astype(np.intp), prod.ravel())
    return Multivector(a.signature, out)


def square(x: Multivector) -> Multivector:
    return gp(x, x)


def grade_project(x: Multivector, k: int) -> Multivector:
    """Keep only blades of grade k (popcount of the bitmask)."""
    if not 0 <= k <= x.signature.dim:
        raise UsageError(f"grade {k} out of range 0..{x.signature.dim}")
    out = np.zeros_like(x.coeffs)
    for bits in range(x.signature.n_blades):
        if _popcount(bits) == k:
            out[bits] = x.coeffs[bits]
    return Multivector(x.signature, out)


def grade(bits: int) -> int:
    """Grade of a blade index (number of basis vectors in the blade)."""
    return _popcount(bits)


def pseudoscalar(sig: Signature) -> Multivector:
    return Multivector.blade(sig, sig.n_blades - 1)


def parse_blade(name: str, sig: Signature) -> tuple[int, int]:
    """Parse a textual blade name into (canonical bits, reordering sign).

    Two spellings: "e.." uses 1-based vector indices (Euclidean convention,
    "e12" = e1 e2); "g.." uses 0-based indices (spacetime convention,
    "g10" = g1 g0). The returned sign is the parity of sorting the written
    index order into canonical ascending order, e.g. ("g10", sta2) ->
    (bits for {0,1}, -1).
    """
    if len(name) < 2 or name[0] not in ("e", "g"):
        raise ParseError(f"blade name must look like 'e12' or 'g10', got {name!r}")
    base = 1 if name[0] == "e" else 0
    indices = []
    for ch in name[1:]:
        if not ch.isdigit():
            raise ParseError(f"invalid character {ch!r} in blade name {name!r}")
        idx = int(ch) - base
        if not 0 <= idx < sig.dim:
            raise ParseError(f"vector {ch} out of range for dim {sig.dim} in {name!r}")
        indices.append(idx)
    if len(set(indices)) != len(indices):
        raise ParseError(f"repeated vector index in blade name {name!r}")
    # bubble sort, counting transpositions
    swaps = 0
    order = list(indices)
    for i in range(len(order)):
        for j in range(len(order) - 1 - i):
            if order[j] > order[j + 1]:
                order[j], order[j + 1] = order[j + 1], order[j]
                swaps += 1
    bits = 0
    for idx in indices:
        bits |= 1 << idx
    return bits, (-1 if swaps & 1 else 1)


def blade_name(bits: int, sig: Signature) -> str:
    """Canonical textual name of a blade, for configs and debug dumps."""
    if bits == 0:
        return "1"
    euclidean = all(m == 1 for m in sig.metric)
    prefix, base = ("e", 1) if euclidean else ("g", 0)
    return prefix + "".join(str(i + base) for i in range(sig.dim) if bits >> i & 1)
