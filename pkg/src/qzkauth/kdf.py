"""Two-step extract-then-expand key derivation.

The pre-shared secret and the handshake timestamp deterministically yield the
basis schedule h1 and the one-time-pad mask h2. Extraction is HMAC-SHA256
keyed with the timestamp; expansion is SP800-108-style counter mode over the
extracted key. Both parties run the same derivation, so equal secrets give
equal schedules.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass

import numpy as np

from .core import BitString
from .errors import ConfigError, KdfInputError

HASH = hashlib.sha256
HASH_BYTES = HASH().digest_size
MAX_EXPAND_BITS = 255 * HASH_BYTES * 8  # one-byte counter bound

DEFAULT_LABEL = b"QZKP-v1"


@dataclass(frozen=True)
class SecretMaterial:
    """Pre-shared secret plus the session timestamp used as extraction salt."""

    s: bytes
    t0: int  # milliseconds, > 0

    def __post_init__(self):
        if not self.s:
            raise KdfInputError("secret must be nonempty")
        if self.t0 <= 0:
            raise KdfInputError("timestamp must be positive")


@dataclass(frozen=True)
class Prk:
    """Fixed-length pseudorandom key produced by the extract step."""

    k_in: bytes

    def __post_init__(self):
        if len(self.k_in) != HASH_BYTES:
            raise KdfInputError(f"prk must be {HASH_BYTES} bytes")


@dataclass(frozen=True)
class DerivedKeys:
    h1: BitString
    h2: BitString

    @property
    def m(self) -> int:
        return len(self.h1)

    @property
    def n(self) -> int:
        return len(self.h2)


def extract(secret: SecretMaterial) -> Prk:
    """HMAC-SHA256 keyed with the big-endian 8-byte timestamp over the secret."""
    salt = struct.pack(">Q", secret.t0)
    return Prk(hmac.new(salt, secret.s, HASH).digest())


def expand(prk: Prk, label: bytes, context: bytes, out_bits: int) -> BitString:
    """Counter-mode expansion truncated to ``out_bits``.

    Block i (i starting at 1, one byte) is
    HMAC(prk, i || label || 0x00 || context || out_bits_be32).
    """
    if out_bits < 1:
        raise KdfInputError("out_bits must be >= 1")
    if out_bits > MAX_EXPAND_BITS:
        raise KdfInputError(f"out_bits {out_bits} exceeds counter-mode bound {MAX_EXPAND_BITS}")
    length_field = struct.pack(">I", out_bits)
    n_blocks = -(-out_bits // (HASH_BYTES * 8))
    okm = b"".join(
        hmac.new(prk.k_in, bytes([i]) + label + b"\x00" + context + length_field, HASH).digest()
        for i in range(1, n_blocks + 1)
    )
    bits = np.unpackbits(np.frombuffer(okm, dtype=np.uint8))[:out_bits]
    return BitString(bits)


def derive_session_keys(
    secret: SecretMaterial,
    m: int,
    n: int,
    label: bytes = DEFAULT_LABEL,
    context: bytes = b"",
) -> DerivedKeys:
    """One expansion of m+n bits; h1 is the first m bits, h2 the last n."""
    if n >= m:
        raise ConfigError(f"mask length n={n} must be smaller than schedule length m={m}")
    if n < 1:
        raise ConfigError("mask length n must be >= 1")
    okm = expand(extract(secret), label, context, m + n)
    return DerivedKeys(h1=okm[:m], h2=okm[m:])


def basis_block(
    prk: Prk,
    block_index: int,
    m: int,
    keys: DerivedKeys,
    label: bytes = DEFAULT_LABEL,
    context: bytes = b"",
) -> BitString:
    """Basis-schedule bits for quantum block ``block_index``.

    Block 0 is h1 from the session derivation. Later blocks re-run the
    expansion with the block counter appended to the context, so basis bits
    are never reused across pulses even when photon loss forces extra blocks.
    """
    if block_index == 0:
        return keys.h1
    return expand(prk, label, context + struct.pack(">Q", block_index), m)
