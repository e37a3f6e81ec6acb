"""Sketch tests. The oracle throughout is the plain Python set model:
build sets, compute symmetric differences directly, compare with what the
sketch machinery recovers."""

import random

import pytest

from erlaysim.sketch import (
    DecodeFailure,
    SyndromeSketch,
    decode_pure,
    serialized_size,
    sketch_create,
    sketch_subset,
)

WIDTHS = (8, 16, 32, 64)


def random_set(rng, bits, n):
    out = set()
    while len(out) < n:
        out.add(rng.randrange(1, 1 << bits))
    return out


# ---------------------------------------------------------------------------
# creation / serialization sizes


def test_create_serialized_sizes():
    assert len(sketch_create(64, 7).serialize()) == 56
    assert len(sketch_create(8, 1).serialize()) == 1
    for bits in WIDTHS:
        for cap in (1, 2, 3, 7, 20):
            sk = sketch_create(bits, cap)
            assert len(sk.serialize()) == serialized_size(bits, cap) \
                == (bits * cap + 7) // 8


def test_fresh_sketch_decodes_empty():
    assert sketch_create(32, 5).decode() == frozenset()


def test_create_rejects_bad_parameters():
    with pytest.raises(ValueError):
        sketch_create(64, 0)
    with pytest.raises(ValueError):
        sketch_create(12, 4)


# ---------------------------------------------------------------------------
# add


def test_add_twice_cancels():
    sk = sketch_create(16, 4)
    assert sk.add(99).add(99) == sk


def test_add_single_element_decodes():
    sk = sketch_create(64, 3).add(0xDEADBEEF)
    assert sk.decode() == frozenset({0xDEADBEEF})


def test_add_ten_random_elements_decode_exactly():
    rng = random.Random(20)
    elems = random_set(rng, 64, 10)
    sk = SyndromeSketch.from_elements(64, 10, elems)
    assert sk.decode() == frozenset(elems)


def test_add_zero_rejected():
    with pytest.raises(ValueError):
        sketch_create(8, 2).add(0)
    with pytest.raises(ValueError):
        SyndromeSketch.from_elements(8, 2, [5, 0])


def test_add_out_of_range_rejected():
    with pytest.raises(ValueError):
        sketch_create(8, 2).add(256)


# ---------------------------------------------------------------------------
# merge


def test_merge_self_is_empty():
    rng = random.Random(21)
    sk = SyndromeSketch.from_elements(32, 6, random_set(rng, 32, 5))
    assert sk.merge(sk) == sketch_create(32, 6)


def test_merge_with_empty_is_identity():
    rng = random.Random(22)
    sk = SyndromeSketch.from_elements(16, 5, random_set(rng, 16, 4))
    assert sk.merge(sketch_create(16, 5)) == sk


def test_merge_decodes_symmetric_difference():
    rng = random.Random(23)
    for bits in WIDTHS:
        for _ in range(20):
            a = random_set(rng, bits, rng.randrange(0, 20))
            b = set(rng.sample(sorted(a), min(len(a), rng.randrange(0, 15))))
            b |= random_set(rng, bits, rng.randrange(0, 6))
            diff = a ^ b
            cap = max(1, len(diff))
            sa = SyndromeSketch.from_elements(bits, cap, a)
            sb = SyndromeSketch.from_elements(bits, cap, b)
            assert sa.merge(sb).decode() == frozenset(diff)


def test_merge_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sketch_create(8, 2).merge(sketch_create(8, 3))
    with pytest.raises(ValueError):
        sketch_create(8, 2).merge(sketch_create(16, 2))


# ---------------------------------------------------------------------------
# decode


def test_decode_at_exact_capacity():
    rng = random.Random(24)
    elems = random_set(rng, 64, 7)
    sk = SyndromeSketch.from_elements(64, 7, elems)
    assert sk.decode() == frozenset(elems)


def test_overfull_decode_never_falsely_succeeds():
    # capacity 7, difference 20: decode must fail every time
    rng = random.Random(25)
    for bits in WIDTHS:
        for _ in range(250):
            elems = random_set(rng, bits, 20)
            sk = SyndromeSketch.from_elements(bits, 7, elems)
            with pytest.raises(DecodeFailure):
                sk.decode()


def test_decode_completeness_exhaustive_small():
    # every pair from a small universe decodes exactly at capacity 2
    universe = list(range(1, 31))
    for i, a in enumerate(universe):
        for b in universe[i + 1:]:
            sk = SyndromeSketch.from_elements(8, 2, {a, b})
            assert sk.decode() == frozenset({a, b})


def test_decode_pure_path_agrees_with_kernels():
    rng = random.Random(26)
    for bits in WIDTHS:
        for _ in range(10 if bits <= 32 else 4):
            elems = random_set(rng, bits, rng.randrange(0, 8))
            sk = SyndromeSketch.from_elements(bits, 8, elems)
            assert decode_pure(sk) == sk.decode() == frozenset(elems)
    # failure agreement
    over = SyndromeSketch.from_elements(16, 2, random_set(rng, 16, 9))
    with pytest.raises(DecodeFailure):
        over.decode()
    with pytest.raises(DecodeFailure):
        decode_pure(over)


def test_linearity_property_randomized():
    # sketch(A) xor sketch(B) == sketch(A symdiff B), >= 1000 cases per width
    rng = random.Random(27)
    for bits in WIDTHS:
        for _ in range(1000):
            cap = rng.randrange(1, 9)
            a = random_set(rng, bits, rng.randrange(0, 12))
            b = random_set(rng, bits, rng.randrange(0, 12))
            sa = SyndromeSketch.from_elements(bits, cap, a)
            sb = SyndromeSketch.from_elements(bits, cap, b)
            sd = SyndromeSketch.from_elements(bits, cap, a ^ b)
            assert sa.merge(sb) == sd


def test_decode_success_resketch_identity():
    rng = random.Random(28)
    for _ in range(50):
        elems = random_set(rng, 32, rng.randrange(0, 10))
        cap = max(1, len(elems) + rng.randrange(0, 3))
        sk = SyndromeSketch.from_elements(32, cap, elems)
        got = sk.decode()
        assert SyndromeSketch.from_elements(32, cap, got) == sk


# ---------------------------------------------------------------------------
# subset sketches (bisection support)


def test_subset_all_low_gives_empty_high():
    elems = {1, 2, 3, 100}
    hi = sketch_subset(elems, 1 << 63, 1 << 64, 64, 4)
    assert hi == sketch_create(64, 4)


def test_subset_halves_merge_to_full():
    rng = random.Random(29)
    for bits in (16, 64):
        elems = random_set(rng, bits, 40)
        mid = 1 << (bits - 1)
        full = SyndromeSketch.from_elements(bits, 12, elems)
        lo = sketch_subset(elems, 0, mid, bits, 12)
        hi = sketch_subset(elems, mid, 1 << bits, bits, 12)
        assert lo.merge(hi) == full


def test_half_split_of_double_difference_decodes():
    # 2d differences, d per half by construction: each half decodes at cap d
    rng = random.Random(30)
    d = 5
    mid = 1 << 63
    low = random_set(rng, 63, d)
    high = {e | mid for e in random_set(rng, 63, d)}
    elems = low | high
    lo = sketch_subset(elems, 0, mid, 64, d)
    hi = sketch_subset(elems, mid, 1 << 64, 64, d)
    assert lo.decode() == frozenset(low)
    assert hi.decode() == frozenset(high)
    full = SyndromeSketch.from_elements(64, d, elems)
    with pytest.raises(DecodeFailure):
        full.decode()  # 2d elements exceed capacity d
    # high half is also recoverable by linearity: full xor low
    assert full.merge(lo).decode() == frozenset(high)


def test_subset_quarter_ranges_compose():
    # recursive bisection support: four aligned quarters merge to the full sketch
    rng = random.Random(31)
    elems = random_set(rng, 16, 30)
    parts = []
    step = 1 << 14
    for q in range(4):
        parts.append(sketch_subset(elems, q * step, (q + 1) * step, 16, 9))
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    assert acc == SyndromeSketch.from_elements(16, 9, elems)


# ---------------------------------------------------------------------------
# serialization


def test_serialize_empty_is_zero_bytes():
    assert sketch_create(64, 3).serialize() == bytes(24)


def test_serialize_roundtrip_random():
    rng = random.Random(32)
    for bits in WIDTHS:
        for _ in range(20):
            sk = SyndromeSketch.from_elements(
                bits, rng.randrange(1, 8), random_set(rng, bits, 5))
            assert SyndromeSketch.deserialize(
                sk.serialize(), sk.bits, sk.capacity) == sk


def test_serialize_layout_little_endian_ascending():
    sk = SyndromeSketch(16, 2, (0x0102, 0xA0B0))
    assert sk.serialize() == bytes([0x02, 0x01, 0xB0, 0xA0])


def test_deserialize_wrong_length_rejected():
    data = sketch_create(64, 3).serialize()
    with pytest.raises(ValueError):
        SyndromeSketch.deserialize(data[:-1], 64, 3)
    with pytest.raises(ValueError):
        SyndromeSketch.deserialize(data + b"\x00", 64, 3)
