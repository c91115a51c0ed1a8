import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from privcode import bits


def test_entropy_endpoints():
    assert bits.binary_entropy(0) == 0.0
    assert bits.binary_entropy(1) == 0.0
    assert bits.binary_entropy(0.5) == 1.0
    with pytest.raises(ValueError):
        bits.binary_entropy(1.5)


@given(st.floats(min_value=1e-6, max_value=0.5))
def test_entropy_inverse_roundtrip(q):
    h = bits.binary_entropy(q)
    assert abs(bits.binary_entropy(bits.inverse_binary_entropy(h)) - h) < 1e-10


def test_codes_put_first_position_in_msb():
    assert bits.bits_to_int("100") == 4
    assert bits.bits_to_str(bits.int_to_bits(6, 4)) == "0110"
    assert bits.int_to_hex(255, 10) == "0ff"


@given(st.integers(min_value=1, max_value=24).flatmap(
    lambda m: st.tuples(st.just(m), st.integers(min_value=0, max_value=2**m - 1))))
def test_int_bits_roundtrip(case):
    m, v = case
    assert bits.bits_to_int(bits.int_to_bits(v, m)) == v
    assert bits.pack_rows(bits.unpack_codes(np.array([v]), m))[0] == v


def test_as_bits_rejects_bad_input():
    with pytest.raises(ValueError):
        bits.as_bits("0120")
    with pytest.raises(ValueError):
        bits.as_bits(3)
    with pytest.raises(ValueError):
        bits.as_bits("01", 3)


def test_window_ranks_match_substring_rank():
    length, pos = 7, [1, 4, 6]
    codes = np.arange(2**length)
    got = bits.window_ranks(codes, pos, length)
    for c in codes:
        s = format(int(c), "07b")
        assert got[c] == int("".join(s[k] for k in pos), 2)


@given(st.lists(st.integers(min_value=0, max_value=2**40), max_size=20))
def test_popcount(values):
    assert bits.popcount(np.array(values, dtype=np.uint64)).tolist() == [
        bin(v).count("1") for v in values]


def _brute_rank(M):
    # size of the row span, counted by enumeration
    M = np.asarray(M) % 2
    span = {tuple((np.array(c) @ M) % 2) for c in itertools.product((0, 1), repeat=M.shape[0])}
    return int(round(math.log2(len(span))))


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=7),
       st.randoms(use_true_random=False))
def test_gf2_rank_and_nullspace(rows, cols, rnd):
    M = np.array([[rnd.randint(0, 1) for _ in range(cols)] for _ in range(rows)], dtype=np.uint8)
    r = bits.gf2_rank(M)
    assert r == _brute_rank(M)
    N = bits.gf2_nullspace(M)
    assert N.shape[0] == cols - r
    if N.size:
        assert not np.any((M.astype(int) @ N.T.astype(int)) % 2)
        assert bits.gf2_rank(N) == N.shape[0]
