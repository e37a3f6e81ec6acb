"""PinSketch set checksums: odd power sums over GF(2^b) with fixed capacity.

A sketch of capacity c over b-bit elements stores the c odd power sums
s_1, s_3, ..., s_(2c-1) of all inserted (nonzero) elements and serializes
to exactly ceil(b*c/8) bytes: the sums in ascending order, each as a
little-endian b-bit integer. XOR of two sketches is the sketch of the
symmetric difference of their element sets; a set of at most c elements
is always recoverable by decoding. Decoding re-sketches the recovered set
and compares, so a reported success is never wrong.

Sketches are immutable values; every operation returns a new sketch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels
from .gf import MODULI, field


class DecodeFailure(Exception):
    """The sketched set exceeded the sketch capacity (or the syndromes are
    not those of any small set)."""


def _modlow(bits: int) -> np.uint64:
    return np.uint64(MODULI[bits] & ((1 << bits) - 1))


@dataclass(frozen=True)
class SyndromeSketch:
    bits: int
    capacity: int
    syndromes: tuple[int, ...]

    def __post_init__(self):
        if self.bits not in MODULI:
            raise ValueError(f"unsupported element width {self.bits}")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if len(self.syndromes) != self.capacity:
            raise ValueError("syndrome count must equal capacity")

    # -- construction -------------------------------------------------------

    @classmethod
    def empty(cls, bits: int, capacity: int) -> "SyndromeSketch":
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if bits not in MODULI:
            raise ValueError(f"unsupported element width {bits}")
        return cls(bits, capacity, (0,) * capacity)

    @classmethod
    def from_elements(cls, bits: int, capacity: int,
                      elements: Iterable[int]) -> "SyndromeSketch":
        elems = np.fromiter((int(e) for e in elements), dtype=np.uint64)
        if elems.size and not np.all(elems):
            raise ValueError("element 0 is not representable in a sketch")
        base = cls.empty(bits, capacity)
        if not elems.size:
            return base
        if bits < 64 and int(elems.max()) >> bits:
            raise ValueError(f"element out of range for {bits}-bit sketch")
        synd = _kernels.syndromes(elems, capacity, np.uint64(bits),
                                  _modlow(bits))
        return cls(bits, capacity, tuple(int(x) for x in synd))

    # -- operations ----------------------------------------------------------

    def add(self, element: int) -> "SyndromeSketch":
        """Sketch with element toggled in (XOR semantics: adding an element
        twice removes it)."""
        if element == 0:
            raise ValueError("element 0 is not representable in a sketch")
        if element >> self.bits:
            raise ValueError(f"element out of range for {self.bits}-bit sketch")
        synd = np.array(self.syndromes, dtype=np.uint64)
        _kernels.add_element(synd, np.uint64(element), np.uint64(self.bits),
                             _modlow(self.bits))
        return SyndromeSketch(self.bits, self.capacity,
                              tuple(int(x) for x in synd))

    def merge(self, other: "SyndromeSketch") -> "SyndromeSketch":
        """XOR combination: the sketch of the symmetric difference."""
        if (self.bits, self.capacity) != (other.bits, other.capacity):
            raise ValueError("cannot merge sketches of different shape")
        return SyndromeSketch(
            self.bits, self.capacity,
            tuple(a ^ b for a, b in zip(self.syndromes, other.syndromes)))

    def decode(self) -> frozenset[int]:
        """The sketched element set; raises DecodeFailure if it exceeds
        capacity. A returned set always re-sketches to this sketch."""
        synd = np.array(self.syndromes, dtype=np.uint64)
        roots, status = _kernels.decode_syndromes(
            synd, np.uint64(self.bits), _modlow(self.bits))
        if status != 0:
            raise DecodeFailure(
                f"sketch (capacity {self.capacity}) is not decodable")
        return frozenset(int(r) for r in roots)

    # -- serialization -------------------------------------------------------

    def serialize(self) -> bytes:
        """Odd power sums ascending, each as a little-endian b-bit integer,
        concatenated: ceil(bits*capacity/8) bytes total."""
        bitstream = 0
        for i, s in enumerate(self.syndromes):
            bitstream |= s << (i * self.bits)
        return bitstream.to_bytes(serialized_size(self.bits, self.capacity),
                                  "little")

    @classmethod
    def deserialize(cls, data: bytes, bits: int, capacity: int) -> "SyndromeSketch":
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if bits not in MODULI:
            raise ValueError(f"unsupported element width {bits}")
        if len(data) != serialized_size(bits, capacity):
            raise ValueError(
                f"expected {serialized_size(bits, capacity)} bytes, "
                f"got {len(data)}")
        bitstream = int.from_bytes(data, "little")
        mask = (1 << bits) - 1
        synd = tuple((bitstream >> (i * bits)) & mask for i in range(capacity))
        return cls(bits, capacity, synd)


def serialized_size(bits: int, capacity: int) -> int:
    """ceil(bits * capacity / 8) bytes."""
    return (bits * capacity + 7) // 8


def sketch_create(bits: int, capacity: int) -> SyndromeSketch:
    """Empty sketch (all-zero syndromes)."""
    return SyndromeSketch.empty(bits, capacity)


def sketch_subset(elements: Iterable[int], lo: int, hi: int, bits: int,
                  capacity: int) -> SyndromeSketch:
    """Sketch over only the elements in the half-open value range [lo, hi).

    The reconciliation protocol uses the single midpoint split
    [0, 2^(b-1)) / [2^(b-1), 2^b); arbitrary aligned subranges are accepted
    so bisection can be applied recursively.  By sketch linearity the merge
    of the two half sketches equals the sketch of the full set.
    """
    return SyndromeSketch.from_elements(
        bits, capacity, (e for e in elements if lo <= e < hi))


def decode_pure(sk: SyndromeSketch) -> frozenset[int]:
    """Pure-Python decode path (reference; used for cross-checks)."""
    from .gf import berlekamp_massey_ints, find_roots_ints

    f = field(sk.bits)
    if not any(sk.syndromes):
        return frozenset()
    full: list[int] = []
    for i in range(2 * sk.capacity):
        if i & 1:
            full.append(f.sqr(full[(i - 1) // 2]))
        else:
            full.append(sk.syndromes[i // 2])
    C = berlekamp_massey_ints(f, full)
    L = len(C) - 1
    if L == 0 or L > sk.capacity:
        raise DecodeFailure("locator degree out of range")
    roots = find_roots_ints(f, list(reversed(C)))
    if roots is None or len(roots) != L or 0 in roots:
        raise DecodeFailure("locator does not split into distinct roots")
    if SyndromeSketch.from_elements(sk.bits, sk.capacity, roots) != sk:
        raise DecodeFailure("verification mismatch")
    return frozenset(roots)
