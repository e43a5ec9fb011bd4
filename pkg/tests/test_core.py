import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qzkauth.core import BitString, RngStream, hamming_fraction, xor
from qzkauth.errors import LengthMismatchError

B = BitString.from_str


@pytest.mark.parametrize("a,b,out", [
    ("1010", "0000", "1010"),
    ("1010", "1010", "0000"),
    ("1100", "1010", "0110"),
])
def test_xor_examples(a, b, out):
    assert xor(B(a), B(b)) == B(out)


def test_xor_truth_table():
    # independent oracle: per-position integer xor
    a, b = B("1100"), B("1010")
    expected = BitString([x ^ y for x, y in zip(a, b)])
    assert xor(a, b) == expected


def test_xor_length_mismatch():
    with pytest.raises(LengthMismatchError):
        xor(B("10"), B("101"))


@given(st.integers(0, 1 << 63), st.integers(1, 200))
def test_xor_involution(seed, n):
    rng = RngStream(seed)
    a, k = rng.bitstring(n), rng.bitstring(n)
    assert xor(xor(a, k), k) == a


@pytest.mark.parametrize("a,b,rate", [
    ("1010", "1010", 0.0),
    ("1010", "0101", 1.0),
    ("1111", "1110", 0.25),
])
def test_hamming_examples(a, b, rate):
    assert hamming_fraction(B(a), B(b)) == rate


def test_hamming_errors():
    with pytest.raises(LengthMismatchError):
        hamming_fraction(B(""), B(""))
    with pytest.raises(LengthMismatchError):
        hamming_fraction(B("10"), B("1"))


@given(st.integers(0, 1 << 63), st.integers(1, 200))
def test_hamming_symmetry_and_zero(seed, n):
    rng = RngStream(seed)
    a, b = rng.bitstring(n), rng.bitstring(n)
    assert hamming_fraction(a, b) == hamming_fraction(b, a)
    assert (hamming_fraction(a, b) == 0.0) == (a == b)


def test_serialization_msb_first():
    bs = B("10100000")
    assert bs.to_bytes() == b"\xa0"
    assert B("1010").to_bytes() == b"\xa0"  # trailing pad bits zero
    assert BitString.from_bytes(b"\xa0", 4) == B("1010")


def test_serialization_rejects_dirty_padding():
    with pytest.raises(ValueError):
        BitString.from_bytes(b"\xa1", 4)
    with pytest.raises(ValueError):
        BitString.from_bytes(b"\xa0", 12)


@given(st.integers(0, 1 << 63), st.integers(0, 130))
def test_serialization_round_trip(seed, n):
    bs = RngStream(seed).bitstring(n)
    assert BitString.from_bytes(bs.to_bytes(), n) == bs


def test_bitstring_immutable_and_sliceable():
    bs = B("10110")
    with pytest.raises(AttributeError):
        bs._bits = None
    with pytest.raises(ValueError):
        bs.bits[0] = 1
    assert bs[1:4] == B("011")
    assert bs[0] == 1 and bs[4] == 0
    assert len(bs) == 5
    assert (bs + B("01")) == B("1011001")


def test_bitstring_validation():
    with pytest.raises(ValueError):
        BitString([0, 2, 1])
    with pytest.raises(ValueError):
        BitString(np.zeros((2, 2), dtype=np.uint8))


def test_rng_determinism_and_independence():
    a = RngStream(1234, 7).uniform(64)
    b = RngStream(1234, 7).uniform(64)
    c = RngStream(1234, 8).uniform(64)
    d = RngStream(1235, 7).uniform(64)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_rng_children_are_disjoint_streams():
    root = RngStream(99)
    kids = [root.child(i).uniform(32) for i in range(4)]
    again = [RngStream(99).child(i).uniform(32) for i in range(4)]
    for k, g in zip(kids, again):
        assert np.array_equal(k, g)
    flat = np.concatenate(kids)
    assert len(np.unique(flat)) == len(flat)  # no accidental stream overlap


def test_rng_bits_are_binary_and_fair():
    bits = RngStream(5).bits(20000)
    assert set(np.unique(bits).tolist()) <= {0, 1}
    assert abs(bits.mean() - 0.5) < 3 * 0.5 / np.sqrt(20000)
