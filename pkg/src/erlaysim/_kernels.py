"""JIT-compiled arithmetic kernels for binary-field sketch coding.

Field elements are machine integers (numpy uint64) for every supported
width; the field is identified by (bits, modlow) where modlow is the
modulus with the implicit x^bits term stripped. All kernels are pure
functions and deterministic, including the root finder, whose splitting
randomizer is a fixed attempt-indexed sequence.

On x86-64 with PCLMULQDQ the multiply compiles to a single carryless
multiply plus a shift fold (~2 ns); elsewhere a portable shift-and-reduce
loop with identical semantics is selected at import time (HAVE_CLMUL
tells which one is active).
"""

import numpy as np
from numba import njit, types, uint64, int64
from numba.core import cgutils
from numba.extending import intrinsic


# ---------------------------------------------------------------------------
# Carryless multiply: pclmulqdq intrinsic with portable fallback


@intrinsic
def _clmul128(typingctx, a_t, b_t):
    """Carryless 64x64 -> 128 bit multiply, returned as (lo, hi)."""
    if not (a_t == types.uint64 and b_t == types.uint64):
        return None
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        from llvmlite import ir

        i64 = ir.IntType(64)
        i32 = ir.IntType(32)
        vec_t = ir.VectorType(i64, 2)
        fnty = ir.FunctionType(vec_t, [vec_t, vec_t, ir.IntType(8)])
        fn = cgutils.get_or_insert_function(
            builder.module, fnty, "llvm.x86.pclmulqdq")
        undef = ir.Constant(vec_t, ir.Undefined)
        zero = i64(0)
        va = builder.insert_element(undef, args[0], i32(0))
        va = builder.insert_element(va, zero, i32(1))
        vb = builder.insert_element(undef, args[1], i32(0))
        vb = builder.insert_element(vb, zero, i32(1))
        res = builder.call(fn, [va, vb, ir.IntType(8)(0)])
        lo = builder.extract_element(res, i32(0))
        hi = builder.extract_element(res, i32(1))
        return cgutils.pack_array(builder, [lo, hi])

    return sig, codegen


def _probe_clmul():
    try:
        @njit(types.UniTuple(uint64, 2)(uint64, uint64))
        def probe(a, b):
            return _clmul128(a, b)

        lo, hi = probe(np.uint64(0x9249249249249249), np.uint64(0x3FF))
        return (int(lo), int(hi)) == (0x6DB6DB6DB6DB6DC7, 0x1C7)
    except Exception:
        return False


HAVE_CLMUL = _probe_clmul()


if HAVE_CLMUL:

    @njit(uint64(uint64, uint64, uint64, uint64), cache=True, inline="always")
    def gf_mul(a, b, bits, modlow):
        lo, hi = _clmul128(a, b)
        if bits == uint64(64):
            while hi:
                flo, fhi = _clmul128(hi, modlow)
                lo ^= flo
                hi = fhi
            return lo
        mask = uint64(0xFFFFFFFFFFFFFFFF) >> (uint64(64) - bits)
        p = lo
        while p >> bits:
            q = p >> bits
            qlo, _ = _clmul128(q, modlow)
            p = (p & mask) ^ qlo
        return p

else:

    @njit(uint64(uint64, uint64, uint64, uint64), cache=True, inline="always")
    def gf_mul(a, b, bits, modlow):
        mask = uint64(0xFFFFFFFFFFFFFFFF) >> (uint64(64) - bits)
        top = uint64(1) << (bits - uint64(1))
        r = uint64(0)
        while b:
            if b & uint64(1):
                r ^= a
            carry = a & top
            a = (a << uint64(1)) & mask
            if carry:
                a ^= modlow
            b >>= uint64(1)
        return r


@njit(uint64(uint64, uint64, uint64), cache=True, inline="always")
def gf_sqr(a, bits, modlow):
    return gf_mul(a, a, bits, modlow)


@njit(uint64(uint64, uint64, uint64), cache=True)
def gf_inv(a, bits, modlow):
    """Inverse by Fermat exponentiation; returns 0 for input 0."""
    if a == uint64(0):
        return uint64(0)
    t = a
    for _ in range(bits - uint64(2)):
        t = gf_mul(gf_sqr(t, bits, modlow), a, bits, modlow)
    return gf_sqr(t, bits, modlow)


# ---------------------------------------------------------------------------
# Sketch syndromes (odd power sums)


@njit(cache=True)
def syndromes(elems, capacity, bits, modlow):
    """Odd power sums s_1, s_3, ..., s_(2*capacity-1) of elems."""
    out = np.zeros(capacity, np.uint64)
    for j in range(len(elems)):
        e = elems[j]
        sq = gf_sqr(e, bits, modlow)
        cur = e
        for i in range(capacity):
            out[i] ^= cur
            cur = gf_mul(cur, sq, bits, modlow)
    return out


@njit(cache=True)
def add_element(synd, e, bits, modlow):
    """XOR the odd power sums of a single element into synd, in place."""
    sq = gf_sqr(e, bits, modlow)
    cur = e
    for i in range(len(synd)):
        synd[i] ^= cur
        cur = gf_mul(cur, sq, bits, modlow)


# ---------------------------------------------------------------------------
# Berlekamp-Massey (inversion-free variant)


@njit(cache=True)
def berlekamp_massey(s, bits, modlow):
    """Minimal LFSR for sequence s. Returns (C, L): connection polynomial
    coefficients C[0..L], lowest degree first, C[0] not normalized."""
    n_s = len(s)
    C = np.zeros(n_s + 1, np.uint64)
    B = np.zeros(n_s + 1, np.uint64)
    C[0] = uint64(1)
    B[0] = uint64(1)
    L = 0
    m = 1
    b = uint64(1)
    for n in range(n_s):
        d = uint64(0)
        for i in range(L + 1):
            d ^= gf_mul(C[i], s[n - i], bits, modlow)
        if d == uint64(0):
            m += 1
            continue
        swap = 2 * L <= n
        T = C.copy() if swap else B
        for i in range(n_s + 1):
            C[i] = gf_mul(b, C[i], bits, modlow)
        for i in range(n_s + 1 - m):
            C[i + m] ^= gf_mul(d, B[i], bits, modlow)
        if swap:
            L = n + 1 - L
            B = T
            b = d
            m = 1
        else:
            m += 1
    return C, L


# ---------------------------------------------------------------------------
# Root finding: Berlekamp trace splitting


@njit(cache=True, inline="always")
def _poly_mod(p, pl, m, ml, bits, modlow):
    """Reduce p (length pl) modulo monic m (length ml) in place; returns the
    reduced length with trailing zero coefficients trimmed."""
    while pl >= ml:
        c = p[pl - 1]
        if c != uint64(0):
            off = pl - ml
            for i in range(ml - 1):
                p[off + i] ^= gf_mul(c, m[i], bits, modlow)
        pl -= 1
    while pl > 0 and p[pl - 1] == uint64(0):
        pl -= 1
    return pl


@njit(cache=True)
def find_roots(loc, L, bits, modlow):
    """All roots of monic loc (degree L) if it splits into distinct linear
    factors; otherwise failure. Returns (roots, n) with n == -1 on failure."""
    out = np.zeros(L, np.uint64)
    if L == 0:
        return out, 0
    maxp = L + 1
    stack = np.zeros((2 * L + 4, maxp), np.uint64)
    slen = np.zeros(2 * L + 4, np.int64)
    stack[0, :maxp] = loc[:maxp]
    slen[0] = maxp
    sp = 1
    nroots = 0
    attempts = uint64(0)
    a = uint64(2)
    t = np.zeros(2 * maxp + 2, np.uint64)
    t2 = np.zeros(4 * maxp + 4, np.uint64)
    mask = uint64(0xFFFFFFFFFFFFFFFF) >> (uint64(64) - uint64(bits))
    while sp > 0:
        sp -= 1
        pl = slen[sp]
        p = stack[sp]
        if pl <= 1:
            return out, -1
        if pl == 2:
            out[nroots] = p[0]
            nroots += 1
            continue
        split = False
        for _ in range(24):
            attempts += uint64(1)
            # trace polynomial of (a*x) mod p: sum of (a*x)^(2^i)
            for i in range(len(t)):
                t[i] = uint64(0)
            t[1] = a
            tl = 2
            for _i in range(bits - 1):
                for i in range(tl - 1, -1, -1):
                    t2[2 * i] = gf_sqr(t[i], bits, modlow)
                    t2[2 * i + 1] = uint64(0)
                t2l = _poly_mod(t2, 2 * tl - 1, p, pl, bits, modlow)
                for i in range(t2l):
                    t[i] = t2[i]
                for i in range(t2l, tl):
                    t[i] = uint64(0)
                tl = t2l
                if tl < 2:
                    t[1] = a
                    if tl == 0:
                        t[0] = uint64(0)
                    tl = 2
                else:
                    t[1] ^= a
                while tl > 0 and t[tl - 1] == uint64(0):
                    tl -= 1
            # g = gcd(p, t)
            g = p[:pl].copy()
            gl = pl
            h = t[:tl].copy()
            hl = int64(tl)
            while hl > 0:
                lc = h[hl - 1]
                if lc != uint64(1):
                    ilc = gf_inv(lc, bits, modlow)
                    for i in range(hl):
                        h[i] = gf_mul(h[i], ilc, bits, modlow)
                gl = _poly_mod(g, gl, h, hl, bits, modlow)
                gtmp = g
                g = h
                h = gtmp
                ltmp = gl
                gl = hl
                hl = ltmp
            if 1 < gl < pl:
                lc = g[gl - 1]
                if lc != uint64(1):
                    ilc = gf_inv(lc, bits, modlow)
                    for i in range(gl):
                        g[i] = gf_mul(g[i], ilc, bits, modlow)
                # p / g by long division (exact)
                rem = p[:pl].copy()
                rl = pl
                ql = pl - gl + 1
                while rl >= gl:
                    c = rem[rl - 1]
                    stack[sp + 1, rl - gl] = c
                    if c != uint64(0):
                        off = rl - gl
                        for i in range(gl - 1):
                            rem[off + i] ^= gf_mul(c, g[i], bits, modlow)
                    rl -= 1
                stack[sp, :gl] = g[:gl]
                slen[sp] = gl
                slen[sp + 1] = ql
                sp += 2
                split = True
                break
            # next deterministic randomizer
            a = (a << uint64(1)) & mask
            a ^= attempts * uint64(0x9E3779B97F4A7C15) & mask
            if a == uint64(0):
                a = uint64(3)
        if not split:
            return out, -1
    return out, nroots


@njit(cache=True)
def decode_syndromes(odd, bits, modlow):
    """Recover the element set from odd power sums.

    Returns (roots ascending, status): status 0 = success (roots verified by
    re-sketching), 1 = decode failure."""
    cap = len(odd)
    empty = np.zeros(0, np.uint64)
    allzero = True
    for i in range(cap):
        if odd[i] != uint64(0):
            allzero = False
            break
    if allzero:
        return empty, 0
    # interleave: full sequence s_1..s_2c with s_{2k} = s_k^2
    s = np.zeros(2 * cap, np.uint64)
    for i in range(2 * cap):
        if i & 1:
            s[i] = gf_sqr(s[(i - 1) // 2], bits, modlow)
        else:
            s[i] = odd[i // 2]
    C, L = berlekamp_massey(s, bits, modlow)
    if L == 0 or L > cap:
        return empty, 1
    # reversed connection polynomial has the set elements as roots
    loc = np.zeros(L + 1, np.uint64)
    for i in range(L + 1):
        loc[i] = C[L - i]
    if loc[L] == uint64(0):
        return empty, 1
    if loc[L] != uint64(1):
        ilc = gf_inv(loc[L], bits, modlow)
        for i in range(L + 1):
            loc[i] = gf_mul(loc[i], ilc, bits, modlow)
    roots, n = find_roots(loc, L, bits, modlow)
    if n != L:
        return empty, 1
    for i in range(n):
        if roots[i] == uint64(0):
            return empty, 1
    chk = syndromes(roots, cap, bits, modlow)
    for i in range(cap):
        if chk[i] != odd[i]:
            return empty, 1
    return np.sort(roots), 0
