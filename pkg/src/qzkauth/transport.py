"""Classical channel: framed codec, transcripts, leakage audit, transports.

Wire format: 4-byte big-endian payload length, 1-byte message type, payload.
No message authentication is implemented; the classical channel is assumed
to be authenticated by the surrounding infrastructure, and the TCP mode
inherits that assumption (see README).

The PULSES frame is not a classical message: it carries the simulated
photon stream between processes (the quantum channel, untrusted by
assumption) and is excluded from transcripts and the leakage audit.
"""

from __future__ import annotations

import queue
import socket
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import BitString
from .errors import DecodeError, ProtocolViolation

__all__ = [
    "Hello",
    "HelloAck",
    "RoundBegin",
    "Detections",
    "Fragment",
    "Verdict",
    "Abort",
    "Pulses",
    "Message",
    "encode",
    "decode",
    "Transcript",
    "AuditReport",
    "transcript_audit",
    "bit_windows",
    "MessageChannel",
    "memory_channel_pair",
    "SocketTransport",
    "QueueTransport",
]

MAX_PAYLOAD = 1 << 20  # 1 MiB; oversize frames are rejected outright

_HELLO, _HELLO_ACK, _ROUND_BEGIN, _DETECTIONS, _FRAGMENT, _VERDICT, _ABORT, _PULSES = range(1, 9)


@dataclass(frozen=True)
class Hello:
    version: int
    t0: int
    round_index: int
    verifier_id: bytes


@dataclass(frozen=True)
class HelloAck:
    t0_echo: int
    prover_id: bytes


@dataclass(frozen=True)
class RoundBegin:
    block_index: int
    block_len: int


@dataclass(frozen=True)
class Detections:
    slots: Tuple[int, ...]


@dataclass(frozen=True)
class Fragment:
    ciphertext: BitString


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    qber: float


@dataclass(frozen=True)
class Abort:
    reason: int
    message: str


@dataclass(frozen=True)
class Pulses:
    """Quantum-plane frame: per-slot (basis, bit, intensity) of one block."""

    block_index: int
    bases: np.ndarray
    bits: np.ndarray
    intensities: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Pulses):
            return NotImplemented
        return (
            self.block_index == other.block_index
            and np.array_equal(self.bases, other.bases)
            and np.array_equal(self.bits, other.bits)
            and np.array_equal(self.intensities, other.intensities)
        )


ClassicalMessage = Union[Hello, HelloAck, RoundBegin, Detections, Fragment, Verdict, Abort]
Message = Union[ClassicalMessage, Pulses]


def _encode_payload(msg: Message) -> Tuple[int, bytes]:
    if isinstance(msg, Hello):
        if not 0 <= len(msg.verifier_id) <= 255:
            raise ValueError("verifier id too long")
        return _HELLO, struct.pack(">HQIB", msg.version, msg.t0, msg.round_index,
                                   len(msg.verifier_id)) + msg.verifier_id
    if isinstance(msg, HelloAck):
        if not 0 <= len(msg.prover_id) <= 255:
            raise ValueError("prover id too long")
        return _HELLO_ACK, struct.pack(">QB", msg.t0_echo, len(msg.prover_id)) + msg.prover_id
    if isinstance(msg, RoundBegin):
        return _ROUND_BEGIN, struct.pack(">II", msg.block_index, msg.block_len)
    if isinstance(msg, Detections):
        return _DETECTIONS, struct.pack(">I", len(msg.slots)) + struct.pack(
            f">{len(msg.slots)}I", *msg.slots)
    if isinstance(msg, Fragment):
        return _FRAGMENT, struct.pack(">I", len(msg.ciphertext)) + msg.ciphertext.to_bytes()
    if isinstance(msg, Verdict):
        return _VERDICT, struct.pack(">Bd", int(msg.accepted), msg.qber)
    if isinstance(msg, Abort):
        raw = msg.message.encode("utf-8")
        if len(raw) > 65535:
            raise ValueError("abort message too long")
        return _ABORT, struct.pack(">BH", msg.reason, len(raw)) + raw
    if isinstance(msg, Pulses):
        n = len(msg.bases)
        packed = (msg.bases | (msg.bits << 1) | (msg.intensities << 2)).astype(np.uint8)
        return _PULSES, struct.pack(">II", msg.block_index, n) + packed.tobytes()
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    mtype, payload = _encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload {len(payload)} exceeds {MAX_PAYLOAD}")
    return struct.pack(">IB", len(payload), mtype) + payload


def _need(payload: bytes, count: int, offset: int = 0) -> None:
    if len(payload) - offset < count:
        raise DecodeError("truncated payload")


def _decode_payload(mtype: int, p: bytes) -> Message:
    if mtype == _HELLO:
        _need(p, 15)
        version, t0, round_index, idlen = struct.unpack(">HQIB", p[:15])
        if len(p) != 15 + idlen:
            raise DecodeError("hello length mismatch")
        return Hello(version, t0, round_index, p[15:])
    if mtype == _HELLO_ACK:
        _need(p, 9)
        t0_echo, idlen = struct.unpack(">QB", p[:9])
        if len(p) != 9 + idlen:
            raise DecodeError("hello-ack length mismatch")
        return HelloAck(t0_echo, p[9:])
    if mtype == _ROUND_BEGIN:
        if len(p) != 8:
            raise DecodeError("round-begin length mismatch")
        block_index, block_len = struct.unpack(">II", p)
        if block_len == 0:
            raise DecodeError("zero-length block")
        return RoundBegin(block_index, block_len)
    if mtype == _DETECTIONS:
        _need(p, 4)
        (count,) = struct.unpack(">I", p[:4])
        if len(p) != 4 + 4 * count:
            raise DecodeError("detections length mismatch")
        slots = struct.unpack(f">{count}I", p[4:]) if count else ()
        if any(b <= a for a, b in zip(slots, slots[1:])):
            raise DecodeError("slot indices not strictly increasing")
        return Detections(slots)
    if mtype == _FRAGMENT:
        _need(p, 4)
        (bit_count,) = struct.unpack(">I", p[:4])
        body = p[4:]
        if len(body) != (bit_count + 7) // 8:
            raise DecodeError("fragment length mismatch")
        try:
            bits = BitString.from_bytes(body, bit_count)
        except ValueError as e:
            raise DecodeError(str(e)) from None
        return Fragment(bits)
    if mtype == _VERDICT:
        if len(p) != 9:
            raise DecodeError("verdict length mismatch")
        flag, qber = struct.unpack(">Bd", p)
        if flag not in (0, 1):
            raise DecodeError("verdict flag not boolean")
        if not 0.0 <= qber <= 1.0:
            raise DecodeError("verdict rate out of range")
        return Verdict(bool(flag), qber)
    if mtype == _ABORT:
        _need(p, 3)
        reason, mlen = struct.unpack(">BH", p[:3])
        if len(p) != 3 + mlen:
            raise DecodeError("abort length mismatch")
        try:
            text = p[3:].decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("abort message not utf-8") from None
        return Abort(reason, text)
    if mtype == _PULSES:
        _need(p, 8)
        block_index, count = struct.unpack(">II", p[:8])
        if len(p) != 8 + count:
            raise DecodeError("pulses length mismatch")
        packed = np.frombuffer(p[8:], dtype=np.uint8)
        if packed.size and packed.max() > 0b1011:
            raise DecodeError("pulse fields out of range")
        intensities = packed >> 2
        if intensities.size and intensities.max() > 2:
            raise DecodeError("unknown intensity class")
        return Pulses(block_index, packed & 1, (packed >> 1) & 1, intensities)
    raise DecodeError(f"unknown message type {mtype}")


def decode(frame: bytes) -> Message:
    """Inverse of encode; rejects anything malformed with DecodeError."""
    if len(frame) < 5:
        raise DecodeError("frame shorter than header")
    plen, mtype = struct.unpack(">IB", frame[:5])
    if plen > MAX_PAYLOAD:
        raise DecodeError("oversize frame")
    if len(frame) != 5 + plen:
        raise DecodeError("frame length field mismatch")
    return _decode_payload(mtype, frame[5:])


@dataclass
class Transcript:
    """Append-only record of the classical frames one party saw in a round."""

    entries: List[Tuple[str, Message, bytes]] = field(default_factory=list)

    def record(self, direction: str, msg: Message, frame: bytes) -> None:
        if isinstance(msg, Pulses):
            return  # quantum plane is not part of the classical transcript
        self.entries.append((direction, msg, frame))

    def frames(self) -> List[bytes]:
        return [frame for _, _, frame in self.entries]

    def messages(self) -> List[Message]:
        return [msg for _, msg, _ in self.entries]

    def payloads(self) -> List[bytes]:
        return [frame[5:] for _, _, frame in self.entries]


def bit_windows(bits: np.ndarray, width: int) -> np.ndarray:
    """All contiguous bit windows of ``width`` (2..64) as integers."""
    if not 2 <= width <= 64:
        raise ValueError("width must be in 2..64")
    n = bits.size - width + 1
    if n <= 0:
        return np.empty(0, dtype=np.uint64)
    out = np.zeros(n, dtype=np.uint64)
    b = bits.astype(np.uint64)
    for k in range(width):
        out |= b[k : k + n] << np.uint64(width - 1 - k)
    return out


@dataclass
class AuditReport:
    passed: bool
    violations: List[str]
    fragment_ones: int
    fragment_bits: int


def transcript_audit(
    transcript: Transcript,
    forbidden: Sequence[Tuple[str, BitString]],
    min_window_bits: int = 64,
) -> AuditReport:
    """Scan every classical payload for windows of the forbidden bitstrings.

    A window of ``min_window_bits`` consecutive bits of any forbidden string
    (basis schedule material, pad mask, fragment plaintext) occurring anywhere
    in a payload, at any bit offset, fails the audit. Strings shorter than the
    window are checked at their full length, down to 32 bits; anything shorter
    is indistinguishable from chance and skipped. The report also accumulates
    the ones count of FRAGMENT ciphertext so callers can pool a bit-balance
    check across rounds.
    """
    payload_bits = []
    fragment_ones = 0
    fragment_bits = 0
    for _, msg, frame in transcript.entries:
        payload = frame[5:]
        if payload:
            payload_bits.append(np.unpackbits(np.frombuffer(payload, dtype=np.uint8)))
        if isinstance(msg, Fragment):
            fragment_ones += int(np.count_nonzero(msg.ciphertext.bits))
            fragment_bits += len(msg.ciphertext)

    widths = set()
    per_string = []
    for name, bs in forbidden:
        width = min(min_window_bits, len(bs))
        if width < 32:
            continue
        widths.add(width)
        per_string.append((name, bs, width))

    payload_sets = {}
    for width in widths:
        windows = set()
        for bits in payload_bits:
            windows.update(bit_windows(bits, width).tolist())
        payload_sets[width] = windows

    violations = []
    for name, bs, width in per_string:
        hits = np.isin(
            bit_windows(bs.bits, width),
            np.fromiter(payload_sets[width], dtype=np.uint64, count=len(payload_sets[width]))
            if payload_sets[width]
            else np.empty(0, dtype=np.uint64),
        )
        if hits.any():
            violations.append(f"{name}: {int(hits.sum())} window(s) of {width} bits leaked")
    return AuditReport(not violations, violations, fragment_ones, fragment_bits)


class QueueTransport:
    """Lossless, ordered, blocking in-memory frame pipe (one direction pair)."""

    def __init__(self, inbox: "queue.Queue", outbox: "queue.Queue", timeout: float = 60.0):
        self._inbox = inbox
        self._outbox = outbox
        self._timeout = timeout
        self._closed = False

    def send_bytes(self, frame: bytes) -> None:
        if self._closed:
            raise ProtocolViolation("channel closed")
        self._outbox.put(frame, timeout=self._timeout)

    def recv_bytes(self) -> bytes:
        try:
            frame = self._inbox.get(timeout=self._timeout)
        except queue.Empty:
            raise ProtocolViolation("channel receive timed out") from None
        if frame is None:
            raise ProtocolViolation("peer closed channel")
        return frame

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._outbox.put_nowait(None)
            except queue.Full:
                pass


class SocketTransport:
    """Length-prefixed framing over a connected TCP socket."""

    def __init__(self, sock: socket.socket, timeout: float = 60.0):
        self._sock = sock
        sock.settimeout(timeout)

    def _recv_exact(self, count: int) -> bytes:
        chunks = []
        got = 0
        while got < count:
            try:
                chunk = self._sock.recv(count - got)
            except socket.timeout:
                raise ProtocolViolation("socket receive timed out") from None
            if not chunk:
                raise ProtocolViolation("peer closed connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def send_bytes(self, frame: bytes) -> None:
        self._sock.sendall(frame)

    def recv_bytes(self) -> bytes:
        header = self._recv_exact(5)
        (plen,) = struct.unpack(">I", header[:4])
        if plen > MAX_PAYLOAD:
            raise DecodeError("oversize frame")
        return header + self._recv_exact(plen)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class MessageChannel:
    """Message-level endpoint over a frame transport, with transcript capture."""

    def __init__(self, transport, transcript: Optional[Transcript] = None):
        self.transport = transport
        self.transcript = transcript if transcript is not None else Transcript()

    def send(self, msg: Message) -> None:
        frame = encode(msg)
        self.transcript.record("sent", msg, frame)
        self.transport.send_bytes(frame)

    def recv(self) -> Message:
        frame = self.transport.recv_bytes()
        msg = decode(frame)
        self.transcript.record("recv", msg, frame)
        return msg

    def close(self) -> None:
        self.transport.close()


def memory_channel_pair(timeout: float = 60.0) -> Tuple[MessageChannel, MessageChannel]:
    """Duplex in-memory channel: returns (verifier end, prover end)."""
    a_to_b: "queue.Queue" = queue.Queue(maxsize=256)
    b_to_a: "queue.Queue" = queue.Queue(maxsize=256)
    end_a = MessageChannel(QueueTransport(b_to_a, a_to_b, timeout))
    end_b = MessageChannel(QueueTransport(a_to_b, b_to_a, timeout))
    return end_a, end_b
