from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablemark.errors import CapacityError, ValidationError
from tablemark.watermarkdb import (
    WatermarkDatabase,
    bind_and_assign,
    bits_to_int,
    bits_to_str,
    derive_delta_be,
    fpr_value,
    generate_offsets,
    int_to_bits,
    load_watermark_db,
    match_watermark,
    save_watermark_db,
    str_to_bits,
)


def max_clique_capped(adj, cap):
    """Largest clique size, stopped at `cap`; bitmask branch and bound."""
    n = len(adj)
    best = 0

    def expand(cand, size):
        nonlocal best
        if size > best:
            best = size
            if best >= cap:
                return True
        while cand:
            if size + bin(cand).count("1") <= best:
                return False
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            if expand(cand & adj[v], size + 1):
                return True
        return False

    expand((1 << n) - 1, 0)
    return best


def brute_force_min_max_weight(N, L, delta_be):
    """Smallest max codeword weight admitting N codewords at distance 2d+1.

    Independent oracle: for growing weight budgets W, build the
    compatibility graph over all words of weight <= W and test whether a
    clique of size N exists.
    """
    d = 2 * delta_be + 1
    for W in range(L + 1):
        cand = [v for v in range(2**L) if bin(v).count("1") <= W]
        if len(cand) < N:
            continue
        adj = []
        for i, a in enumerate(cand):
            mask = 0
            for j, b in enumerate(cand):
                if i != j and bin(a ^ b).count("1") >= d:
                    mask |= 1 << j
            adj.append(mask)
        if max_clique_capped(adj, N) >= N:
            return W
    return None


def test_bit_string_round_trip():
    bits = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
    assert str_to_bits(bits_to_str(bits)).tolist() == bits.tolist()
    assert int_to_bits(bits_to_int(bits), 5).tolist() == bits.tolist()
    assert bits_to_int(bits) == 0b10110  # MSB-first convention


def test_fpr_value_exact():
    # Eq.-style closed form in exact rational arithmetic
    assert fpr_value(5, 8, 1) == Fraction(5 * (1 + 8), 2**8)
    assert fpr_value(1000, 32, 2) == Fraction(1000 * (1 + 32 + 496), 2**32)


def test_derived_delta_be_default_config():
    # at N=1000, L=32, delta_fpr=1e-3 the largest admissible tolerance is 2:
    assert fpr_value(1000, 32, 2) <= Fraction(1, 1000)
    assert fpr_value(1000, 32, 3) > Fraction(1, 1000)
    assert derive_delta_be(1000, 32, 1e-3) == 2


def test_derive_delta_be_small():
    assert derive_delta_be(5, 8, 0.2) == 1  # 45/256 <= 0.2 < 5*37/256


def test_derive_delta_be_capacity_error():
    with pytest.raises(CapacityError):
        derive_delta_be(1000, 4, 1e-6)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=4, max_value=12),
    st.integers(min_value=0, max_value=2),
)
def test_offsets_distance_and_weight_order(N, L, delta_be):
    try:
        offsets = generate_offsets(N, L, delta_be)
    except CapacityError:
        return
    ints = [bits_to_int(o) for o in offsets]
    assert len(ints) == N
    assert len(set(ints)) == N
    assert ints[0] == 0  # the all-zero offset comes first
    weights = [bin(v).count("1") for v in ints]
    assert weights == sorted(weights)
    d = 2 * delta_be + 1
    for i in range(N):
        for j in range(i + 1, N):
            assert bin(ints[i] ^ ints[j]).count("1") >= d


def test_offsets_match_brute_force_small():
    for L, delta_be, N in [(6, 1, 5), (6, 1, 4), (7, 1, 6), (8, 1, 5), (5, 0, 7)]:
        offsets = generate_offsets(N, L, delta_be)
        got = max(bin(bits_to_int(o)).count("1") for o in offsets)
        assert got == brute_force_min_max_weight(N, L, delta_be)


def test_greedy_offsets_are_not_always_weight_optimal():
    """Pins a known gap of the zero-anchored best-first construction.

    At L=8, delta_be=2, N=3 the optimum max weight is 3 (for example
    {00000111, 11100000, 00011000}), but any codebook containing the
    all-zero word needs every other word at weight >= 5. The construction
    deliberately anchors at zero so the first buyer's watermark equals
    the conflict-free optimal watermark, and pays this gap.
    """
    offsets = generate_offsets(3, 8, 2)
    got = max(bin(bits_to_int(o)).count("1") for o in offsets)
    assert got == 5
    assert brute_force_min_max_weight(3, 8, 2) == 3


def test_generate_capacity_error():
    with pytest.raises(CapacityError):
        generate_offsets(100, 4, 2)


def test_bind_assign_match_round_trip():
    db = WatermarkDatabase.generate(8, 12, 0.5)
    w_star = np.array([1, 0] * 6, dtype=np.uint8)
    w_a = bind_and_assign(db, w_star, "alice")
    w_b = bind_and_assign(db, w_star, "bob")
    assert not np.array_equal(w_a, w_b)
    # idempotent per buyer
    assert np.array_equal(bind_and_assign(db, w_star, "alice"), w_a)
    assert match_watermark(db, w_a) == "alice"
    assert match_watermark(db, w_b) == "bob"
    # flipping up to delta_be bits keeps the match
    flipped = w_a.copy()
    flip_pos = np.argsort([0 if i else 1 for i in range(12)])[: db.delta_be]
    for p in flip_pos:
        flipped[p] ^= 1
    assert match_watermark(db, flipped) == "alice"


def test_match_requires_binding():
    db = WatermarkDatabase.generate(4, 8, 0.5)
    with pytest.raises(ValidationError):
        match_watermark(db, np.zeros(8, dtype=np.uint8))


def test_bind_rejects_different_w_star():
    db = WatermarkDatabase.generate(4, 8, 0.5)
    bind_and_assign(db, np.zeros(8, dtype=np.uint8), "a")
    with pytest.raises(ValidationError):
        bind_and_assign(db, np.ones(8, dtype=np.uint8), "b")


def test_buyer_exhaustion():
    db = WatermarkDatabase.generate(2, 8, 0.5)
    w_star = np.zeros(8, dtype=np.uint8)
    bind_and_assign(db, w_star, "a")
    bind_and_assign(db, w_star, "b")
    with pytest.raises(CapacityError):
        bind_and_assign(db, w_star, "c")


def test_db_round_trip(tmp_path):
    db = WatermarkDatabase.generate(6, 10, 0.5)
    bind_and_assign(db, np.ones(10, dtype=np.uint8), "alice")
    path = tmp_path / "db.json"
    save_watermark_db(db, path)
    loaded = load_watermark_db(path)
    assert loaded.L == db.L and loaded.N == db.N and loaded.delta_be == db.delta_be
    assert loaded.assignments == db.assignments
    assert all(np.array_equal(a, b) for a, b in zip(loaded.offsets, db.offsets))
    assert np.array_equal(loaded.w_star, db.w_star)
