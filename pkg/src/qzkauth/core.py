"""Bit-string values and deterministic random streams shared by all modules."""

from __future__ import annotations

from typing import Iterable, Union

import numpy as np

from .errors import LengthMismatchError

__all__ = ["BitString", "RngStream", "xor", "hamming_fraction"]


class BitString:
    """Immutable ordered sequence of bits.

    Serialization is big-endian byte packing, MSB first, trailing pad bits
    zero; the bit count travels alongside the bytes because the packed form
    alone cannot distinguish e.g. 5 bits from 8.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: Union[Iterable[int], np.ndarray]):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "_bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BitString is immutable")

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        return cls(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_bytes(cls, data: bytes, bit_count: int) -> "BitString":
        if bit_count < 0 or bit_count > 8 * len(data):
            raise ValueError(f"bit_count {bit_count} does not fit in {len(data)} bytes")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if bits[bit_count:].any():
            raise ValueError("nonzero padding bits")
        return cls(bits[:bit_count])

    def to_bytes(self) -> bytes:
        return np.packbits(self._bits).tobytes()

    @property
    def bits(self) -> np.ndarray:
        """Read-only uint8 view, one element per bit."""
        return self._bits

    def __len__(self) -> int:
        return self._bits.size

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitString(self._bits[idx])
        return int(self._bits[idx])

    def __iter__(self):
        return iter(int(b) for b in self._bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(
            np.array_equal(self._bits, other._bits)
        )

    def __hash__(self) -> int:
        return hash((self._bits.size, self._bits.tobytes()))

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)

    def __add__(self, other: "BitString") -> "BitString":
        return BitString(np.concatenate([self._bits, other._bits]))

    def __repr__(self) -> str:
        body = "".join(str(b) for b in self._bits[:64])
        if len(self) > 64:
            body += f"...({len(self)} bits)"
        return f"BitString({body})"

    def ones_fraction(self) -> float:
        if not len(self):
            raise LengthMismatchError("ones_fraction undefined for empty string")
        return float(np.count_nonzero(self._bits)) / len(self)


def xor(a: BitString, b: BitString) -> BitString:
    """Bit-by-bit XOR; defined only for equal lengths."""
    if len(a) != len(b):
        raise LengthMismatchError(f"xor of {len(a)} vs {len(b)} bits")
    return BitString(np.bitwise_xor(a.bits, b.bits))


def hamming_fraction(a: BitString, b: BitString) -> float:
    """Fraction of mismatching positions between two equal-length strings."""
    if len(a) != len(b):
        raise LengthMismatchError(f"hamming of {len(a)} vs {len(b)} bits")
    if len(a) == 0:
        raise LengthMismatchError("hamming fraction undefined for empty strings")
    return float(np.count_nonzero(a.bits != b.bits)) / len(a)


class RngStream:
    """Deterministic random stream.

    Algorithm identity: NumPy Philox 4x64 seeded through SeedSequence with
    ``spawn_key`` set to the stream path, so equal ``(seed, stream path)``
    reproduce the exact draw sequence and distinct paths are statistically
    independent. Not cryptographic; the KDF supplies all cryptographic
    pseudo-randomness in the protocol.
    """

    __slots__ = ("seed", "path", "gen")

    def __init__(self, seed: int, stream_id: Union[int, tuple] = 0):
        self.seed = int(seed)
        self.path = (int(stream_id),) if isinstance(stream_id, int) else tuple(
            int(x) for x in stream_id
        )
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        """Independent sub-stream; each logical actor owns its own."""
        return RngStream(self.seed, self.path + (int(stream_id),))

    def bits(self, n: int) -> np.ndarray:
        return self.gen.integers(0, 2, size=n, dtype=np.uint8)

    def bitstring(self, n: int) -> BitString:
        return BitString(self.bits(n))

    def uniform(self, n: int) -> np.ndarray:
        return self.gen.random(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
