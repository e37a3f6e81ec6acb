"""Arithmetic over binary extension fields GF(2^b), b in {8, 16, 32, 64}.

Field elements are plain ints interpreted against a fixed, published
irreducible modulus per width (one modulus per width is part of the sketch
wire format):

    b = 8    x^8  + x^4 + x^3 + x + 1          (0x11B, the AES polynomial)
    b = 16   x^16 + x^5 + x^3 + x + 1          (0x1002B)
    b = 32   x^32 + x^7 + x^3 + x^2 + 1        (0x1_0000008D)
    b = 64   x^64 + x^4 + x^3 + x + 1          (0x1_000000000000001B)

Addition is XOR. Polynomials over the field are dense coefficient lists,
lowest degree first, with no trailing zero coefficients.

This module is the readable reference implementation; the JIT kernels in
_kernels mirror it for speed and are cross-checked against it in tests.
The full-field root sweep here is the oracle for widths <= 20; wider
fields use trace-based splitting with identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

MODULI = {
    8: 0x11B,
    16: (1 << 16) | 0x2B,
    32: (1 << 32) | 0x8D,
    64: (1 << 64) | 0x1B,
}

SUPPORTED_WIDTHS = tuple(sorted(MODULI))

FULL_SWEEP_MAX_BITS = 20


class Field:
    """Operations on int-represented elements of GF(2^bits)."""

    def __init__(self, bits: int):
        if bits not in MODULI:
            raise ValueError(f"unsupported field width {bits}")
        self.bits = bits
        self.modulus = MODULI[bits]
        self.mask = (1 << bits) - 1
        self.order = 1 << bits

    def mul(self, a: int, b: int) -> int:
        """Shift-and-reduce product."""
        r = 0
        top = 1 << (self.bits - 1)
        modlow = self.modulus & self.mask
        while b:
            if b & 1:
                r ^= a
            carry = a & top
            a = (a << 1) & self.mask
            if carry:
                a ^= modlow
            b >>= 1
        return r

    def sqr(self, a: int) -> int:
        return self.mul(a, a)

    def pow(self, a: int, n: int) -> int:
        r = 1
        while n:
            if n & 1:
                r = self.mul(r, a)
            a = self.sqr(a)
            n >>= 1
        return r

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return self.pow(a, self.order - 2)

    def __repr__(self):
        return f"Field(bits={self.bits})"


_FIELDS: dict[int, Field] = {}


def field(bits: int) -> Field:
    """Shared Field instance for a supported width."""
    if bits not in _FIELDS:
        _FIELDS[bits] = Field(bits)
    return _FIELDS[bits]


@dataclass(frozen=True)
class FieldElement:
    """A b-bit field element: value < 2^bits."""

    value: int
    bits: int

    def __post_init__(self):
        if self.bits not in MODULI:
            raise ValueError(f"unsupported field width {self.bits}")
        if not 0 <= self.value < (1 << self.bits):
            raise ValueError(f"value {self.value} out of range for {self.bits} bits")

    def __xor__(self, other: "FieldElement") -> "FieldElement":
        _require_same_width(self, other)
        return FieldElement(self.value ^ other.value, self.bits)

    __add__ = __xor__


@dataclass(frozen=True)
class FieldPoly:
    """Dense polynomial over GF(2^bits); coefficients lowest degree first,
    leading coefficient nonzero unless the polynomial is zero (empty)."""

    coefficients: tuple[int, ...]
    bits: int

    def __post_init__(self):
        if self.coefficients and self.coefficients[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1 if self.coefficients else -1


def _require_same_width(a, b):
    if a.bits != b.bits:
        raise ValueError(f"field width mismatch: {a.bits} vs {b.bits}")


def gf_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    """Product modulo the published modulus for the width."""
    _require_same_width(a, b)
    return FieldElement(field(a.bits).mul(a.value, b.value), a.bits)


def gf_inv(a: FieldElement) -> FieldElement:
    """Multiplicative inverse; a must be nonzero."""
    return FieldElement(field(a.bits).inv(a.value), a.bits)


def poly_eval(p: FieldPoly, x: FieldElement) -> FieldElement:
    """Horner evaluation of p at x."""
    f = field(x.bits)
    acc = 0
    for c in reversed(p.coefficients):
        acc = f.mul(acc, x.value) ^ c
    return FieldElement(acc, x.bits)


# ---------------------------------------------------------------------------
# Decoder building blocks (int-level; FieldPoly wrappers below)


def berlekamp_massey_ints(f: Field, s: list[int]) -> list[int]:
    """Minimal connection polynomial (C[0] = 1) for sequence s over f."""
    C, B = [1], [1]
    L, m, b = 0, 1, 1
    for n in range(len(s)):
        d = s[n]
        for i in range(1, L + 1):
            d ^= f.mul(C[i], s[n - i])
        if d == 0:
            m += 1
            continue
        T = list(C)
        while len(C) <= len(B) + m - 1:
            C.append(0)
        coef = f.mul(d, f.inv(b))
        for i in range(len(B)):
            C[i + m] ^= f.mul(coef, B[i])
        if 2 * L <= n:
            L, B, b, m = n + 1 - L, T, d, 1
        else:
            m += 1
    return C[: L + 1]


def _poly_monic(f: Field, p: list[int]) -> list[int]:
    i = f.inv(p[-1])
    return [f.mul(c, i) for c in p]


def _poly_mod(f: Field, p: list[int], m: list[int]) -> list[int]:
    """p mod m for monic m; destroys p."""
    assert m and m[-1] == 1
    while len(p) >= len(m):
        c = p[-1]
        if c:
            off = len(p) - len(m)
            for i in range(len(m) - 1):
                p[off + i] ^= f.mul(c, m[i])
        p.pop()
    while p and p[-1] == 0:
        p.pop()
    return p


def _poly_divexact(f: Field, p: list[int], m: list[int]) -> list[int]:
    """Quotient p / m for monic m dividing p exactly."""
    rem = list(p)
    q = [0] * (len(p) - len(m) + 1)
    while len(rem) >= len(m):
        c = rem[-1]
        q[len(rem) - len(m)] = c
        if c:
            off = len(rem) - len(m)
            for i in range(len(m) - 1):
                rem[off + i] ^= f.mul(c, m[i])
        rem.pop()
    return q


def _poly_gcd(f: Field, a: list[int], b: list[int]) -> list[int]:
    while b:
        b = _poly_monic(f, b)
        a = _poly_mod(f, a, b)
        a, b = b, a
    return a


def _trace_poly(f: Field, p: list[int], a: int) -> list[int]:
    """Trace polynomial sum of (a*x)^(2^i) reduced mod p."""
    out = [0, a]
    for _ in range(f.bits - 1):
        sq = [0] * (2 * len(out) - 1)
        for i, c in enumerate(out):
            sq[2 * i] = f.sqr(c)
        out = _poly_mod(f, sq, p)
        while len(out) < 2:
            out.append(0)
        out[1] ^= a
        while out and out[-1] == 0:
            out.pop()
    return out


def _roots_by_sweep(f: Field, p: list[int]) -> list[int]:
    roots = []
    for x in range(f.order):
        acc = 0
        for c in reversed(p):
            acc = f.mul(acc, x) ^ c
        if acc == 0:
            roots.append(x)
    return roots


def _roots_by_splitting(f: Field, p: list[int]) -> list[int] | None:
    stack = [list(p)]
    roots: list[int] = []
    a = 2
    attempts = 0
    while stack:
        q = stack.pop()
        if len(q) == 1:
            return None
        if len(q) == 2:
            roots.append(q[0])
            continue
        for _ in range(24):
            attempts += 1
            t = _trace_poly(f, q, a)
            g = _poly_gcd(f, list(q), list(t))
            a = ((a << 1) & f.mask) ^ (attempts * 0x9E3779B97F4A7C15 & f.mask)
            if a == 0:
                a = 3
            if 1 < len(g) < len(q):
                g = _poly_monic(f, g)
                stack.append(g)
                stack.append(_poly_divexact(f, q, g))
                break
        else:
            return None
    return roots


def find_roots_ints(f: Field, locator: list[int]) -> set[int] | None:
    """Distinct roots of locator, or None if it does not split into
    distinct linear factors (never a partial answer)."""
    if not locator:
        return None
    if len(locator) == 1:
        return set()
    loc = _poly_monic(f, locator)
    degree = len(loc) - 1
    if f.bits <= FULL_SWEEP_MAX_BITS:
        roots = _roots_by_sweep(f, loc)
    else:
        roots = _roots_by_splitting(f, loc)
        if roots is None:
            return None
    if len(set(roots)) != degree:
        return None
    return set(roots)


def berlekamp_massey(syndromes: list[FieldElement]) -> FieldPoly:
    """Error-locator polynomial from the full interleaved syndrome sequence
    s_1..s_2c (even entries are squares of earlier ones)."""
    if not syndromes:
        return FieldPoly((1,), 64)
    bits = syndromes[0].bits
    for s in syndromes:
        _require_same_width(s, syndromes[0])
    C = berlekamp_massey_ints(field(bits), [s.value for s in syndromes])
    return FieldPoly(tuple(C), bits)


def find_roots(locator: FieldPoly) -> set[FieldElement] | None:
    """All distinct roots of the locator, or None on failure."""
    res = find_roots_ints(field(locator.bits), list(locator.coefficients))
    if res is None:
        return None
    return {FieldElement(r, locator.bits) for r in res}
