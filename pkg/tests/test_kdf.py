import hashlib
import hmac
import struct
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from qzkauth.core import BitString, RngStream
from qzkauth.errors import ConfigError, KdfInputError
from qzkauth.kdf import (
    MAX_EXPAND_BITS,
    Prk,
    SecretMaterial,
    basis_block,
    derive_session_keys,
    expand,
    extract,
)

VECTOR_FILE = Path(__file__).parent / "data" / "kdf_vectors.txt"


def _bits_of(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def test_extract_matches_reference_hmac():
    # independent oracle: direct HMAC-SHA256 with the documented key layout
    sm = SecretMaterial(b"secret-A", 1_700_000_000_000)
    expected = hmac.new(struct.pack(">Q", sm.t0), sm.s, hashlib.sha256).digest()
    assert extract(sm).k_in == expected


def test_extract_determinism_and_sensitivity():
    t0 = 1_699_999_999_123
    a = extract(SecretMaterial(b"secret-A", t0))
    assert a == extract(SecretMaterial(b"secret-A", t0))
    assert a != extract(SecretMaterial(b"secret-A", t0 + 1))
    assert a != extract(SecretMaterial(b"secret-B", t0))


def test_extract_rejects_bad_inputs():
    with pytest.raises(KdfInputError):
        SecretMaterial(b"", 1)
    with pytest.raises(KdfInputError):
        SecretMaterial(b"x", 0)


def test_extract_timestamp_avalanche():
    # 1000 random (s, t0) pairs; flipping the salt by 1 ms flips >= 30% of bits
    rng = RngStream(1001)
    for _ in range(1000):
        s = bytes(rng.gen.integers(0, 256, size=int(rng.gen.integers(1, 33)),
                                   dtype=np.uint8))
        t0 = int(rng.gen.integers(1, 1 << 48))
        d1 = _bits_of(extract(SecretMaterial(s, t0)).k_in)
        d2 = _bits_of(extract(SecretMaterial(s, t0 + 1)).k_in)
        assert np.count_nonzero(d1 != d2) >= 0.30 * d1.size


def test_expand_determinism_and_single_bit():
    prk = extract(SecretMaterial(b"seed", 42))
    a = expand(prk, b"QZKP-h", b"ctx", 123)
    assert a == expand(prk, b"QZKP-h", b"ctx", 123)
    one = expand(prk, b"QZKP-h", b"ctx", 1)
    assert len(one) == 1
    assert one == expand(prk, b"QZKP-h", b"ctx", 1)


def test_expand_counter_mode_layout():
    # independent oracle for the documented block layout
    prk = extract(SecretMaterial(b"layout", 7))
    out_bits = 600
    blocks = b"".join(
        hmac.new(prk.k_in, bytes([i]) + b"L" + b"\x00" + b"C" + struct.pack(">I", out_bits),
                 hashlib.sha256).digest()
        for i in (1, 2, 3)
    )
    expected = BitString(_bits_of(blocks)[:out_bits])
    assert expand(prk, b"L", b"C", out_bits) == expected


def test_expand_label_independence():
    prk = extract(SecretMaterial(b"indep", 99))
    rng = RngStream(55)
    for _ in range(1000):
        ctx = bytes(rng.gen.integers(0, 256, size=8, dtype=np.uint8))
        a = expand(prk, b"QZKP-h", ctx, 256)
        b = expand(prk, b"QZKP-x", ctx, 256)
        assert np.count_nonzero(a.bits != b.bits) >= 0.30 * 256


def test_expand_bounds():
    prk = Prk(b"\x00" * 32)
    with pytest.raises(KdfInputError):
        expand(prk, b"l", b"c", 0)
    with pytest.raises(KdfInputError):
        expand(prk, b"l", b"c", MAX_EXPAND_BITS + 1)
    assert len(expand(prk, b"l", b"c", MAX_EXPAND_BITS)) == MAX_EXPAND_BITS


def test_derive_honest_pair_agrees():
    kw = dict(m=512, n=76, context=b"alicebob")
    a = derive_session_keys(SecretMaterial(b"shared", 1700), **kw)
    b = derive_session_keys(SecretMaterial(b"shared", 1700), **kw)
    assert a.h1 == b.h1 and a.h2 == b.h2


def test_derive_split_consistency():
    sm = SecretMaterial(b"split", 123456)
    keys = derive_session_keys(sm, 300, 40, context=b"vp")
    whole = expand(extract(sm), b"QZKP-v1", b"vp", 340)
    assert whole[:300] == keys.h1
    assert whole[300:] == keys.h2


def test_derive_rejects_bad_lengths():
    sm = SecretMaterial(b"x", 1)
    with pytest.raises(ConfigError):
        derive_session_keys(sm, 10, 10)
    with pytest.raises(ConfigError):
        derive_session_keys(sm, 10, 12)


def test_derive_mismatched_secrets_agree_at_chance():
    rng = RngStream(77)
    agree = 0
    total = 0
    for i in range(1000):
        t0 = int(rng.gen.integers(1, 1 << 40))
        a = derive_session_keys(SecretMaterial(b"secret-A", t0), 64, 16)
        b = derive_session_keys(SecretMaterial(b"secret-B", t0), 64, 16)
        agree += int(np.count_nonzero(a.h1.bits == b.h1.bits))
        agree += int(np.count_nonzero(a.h2.bits == b.h2.bits))
        total += 80
    frac = agree / total
    sigma = 0.5 / np.sqrt(total)
    assert abs(frac - 0.5) < 4 * sigma


def test_h1_h2_bitwise_independence_chi_square():
    # paired (h1 bit, h2 bit) contingency over many sessions; 1% significance
    table = np.zeros((2, 2), dtype=np.int64)
    for t0 in range(1000, 1600):
        keys = derive_session_keys(SecretMaterial(b"independence", t0), 96, 95)
        h1 = keys.h1.bits[:95]
        h2 = keys.h2.bits
        for a in (0, 1):
            for b in (0, 1):
                table[a, b] += int(np.count_nonzero((h1 == a) & (h2 == b)))
    chi2 = scipy.stats.chi2_contingency(table)
    assert chi2.pvalue > 0.01


def test_basis_block_freshness():
    sm = SecretMaterial(b"blocks", 5)
    keys = derive_session_keys(sm, 128, 16, context=b"ab")
    prk = extract(sm)
    b0 = basis_block(prk, 0, 128, keys, context=b"ab")
    b1 = basis_block(prk, 1, 128, keys, context=b"ab")
    b1_again = basis_block(prk, 1, 128, keys, context=b"ab")
    assert b0 == keys.h1
    assert b1 != b0
    assert b1 == b1_again
    assert len(b1) == 128


def test_frozen_vectors():
    """Regression fixtures: s_hex, t0_decimal, m, n, h1_hex, h2_hex lines."""
    for line in VECTOR_FILE.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        s_hex, t0_dec, m, n, h1_hex, h2_hex = [f.strip() for f in line.split(",")]
        keys = derive_session_keys(SecretMaterial(bytes.fromhex(s_hex), int(t0_dec)),
                                   int(m), int(n))
        assert keys.h1.to_bytes().hex() == h1_hex
        assert keys.h2.to_bytes().hex() == h2_hex
