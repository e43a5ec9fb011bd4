"""Verifier and prover state machines.

One round: handshake fixing a shared timestamp, key derivation on both
sides, quantum blocks until the target sifted length is reached, partial
sifting (detection instants only, never bases), pad-masked fragment
exchange, error-rate estimate, verdict. Rounds are strictly ordered
two-party dialogues over a MessageChannel; the in-process runner connects
the two state machines through an in-memory channel, the TCP mode through
a socket, with identical frames either way.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import kdf
from .adversary import (
    ProverStrategy,
    StrategyKind,
    VerifierStrategy,
    prover_bases_block,
    verifier_bases_block,
)
from .core import BitString, RngStream, hamming_fraction, xor
from .errors import (
    ConfigError,
    DecodeError,
    HandshakeError,
    InsufficientDetectionsError,
    ProtocolViolation,
)
from .photonics import (
    ChannelModel,
    DetectorModel,
    EmittedSymbol,
    Intensity,
    IntensityPlan,
    SymbolBlock,
    simulate_block,
)
from .transport import (
    Abort,
    Detections,
    Fragment,
    Hello,
    HelloAck,
    MessageChannel,
    Pulses,
    RoundBegin,
    Transcript,
    Verdict,
    memory_channel_pair,
)

__all__ = [
    "PROTOCOL_VERSION",
    "ProtocolConfig",
    "RoundResult",
    "SessionStats",
    "RoundCapture",
    "verdict",
    "select_fragment",
    "sift",
    "fragment_exchange",
    "handshake",
    "alice_prepare_block",
    "bob_measure_block",
    "verifier_round",
    "prover_round",
    "run_round",
    "run_session",
]

PROTOCOL_VERSION = 1

# rng sub-stream ids within a round
_STREAM_VERIFIER = 1
_STREAM_PROVER = 2
_STREAM_CHANNEL = 3

# abort reason codes
ABORT_VERSION = 1
ABORT_ECHO = 2
ABORT_NO_DETECTIONS = 3
ABORT_VIOLATION = 4


@dataclass(frozen=True)
class ProtocolConfig:
    """Session parameters shared by both parties before a run."""

    m: int = 2048  # basis-schedule bits per quantum block
    target_sifted_len: int = 2048
    fragment_fraction: float = 0.15
    t_v: float = 0.11
    iterations: int = 1
    rep_rate_hz: float = 1000.0
    max_blocks_per_round: int = 100_000
    verifier_id: bytes = b"alice"
    prover_id: bytes = b"bob"
    t0_base_ms: int = 1_700_000_000_000
    channel: ChannelModel = ChannelModel()
    detector: DetectorModel = DetectorModel()
    intensity: IntensityPlan = IntensityPlan()

    def __post_init__(self):
        if self.m < 1 or self.target_sifted_len < 1:
            raise ConfigError("m and target_sifted_len must be >= 1")
        if not 0.0 < self.fragment_fraction < 1.0:
            raise ConfigError("fragment_fraction must be in (0, 1)")
        if not 0.0 < self.t_v < 0.5:
            raise ConfigError("verification threshold must be in (0, 0.5)")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.rep_rate_hz <= 0:
            raise ConfigError("rep_rate_hz must be > 0")
        if self.n >= self.m:
            raise ConfigError(f"fragment length n={self.n} must be below m={self.m}")
        if self.t0_base_ms <= 0:
            raise ConfigError("t0_base_ms must be > 0")

    @property
    def n(self) -> int:
        """Fragment/pad length, fixed before the quantum stage."""
        return max(1, math.floor(self.fragment_fraction * self.target_sifted_len))

    @property
    def kdf_context(self) -> bytes:
        return self.verifier_id + self.prover_id


@dataclass(frozen=True)
class RoundResult:
    qber_est: float
    accepted: bool
    sifted_len: int
    pulses_sent: int
    elapsed_model_s: float
    violation: Optional[str] = None


@dataclass(frozen=True)
class SessionStats:
    mean_qber: float
    sigma_qber: float
    accept_count: int
    rounds: Tuple[RoundResult, ...]
    sigma_defined: bool = True


@dataclass
class RoundCapture:
    """Simulation introspection for analysis and leakage audits.

    Only meaningful in-process; a real party never sees the other side's
    fields. ``forbidden_material`` collects everything the classical
    transcript must not contain.
    """

    delta_a: Optional[BitString] = None
    delta_b: Optional[BitString] = None
    fragment_plain: Optional[BitString] = None
    verifier_keys: Optional[kdf.DerivedKeys] = None
    prover_keys: Optional[kdf.DerivedKeys] = None
    verifier_schedule_blocks: List[BitString] = field(default_factory=list)
    verifier_transcript: Optional[Transcript] = None
    prover_transcript: Optional[Transcript] = None

    def forbidden_material(self) -> List[Tuple[str, BitString]]:
        out: List[Tuple[str, BitString]] = []
        for i, blk in enumerate(self.verifier_schedule_blocks):
            out.append((f"h1 block {i}", blk))
        if self.verifier_keys is not None:
            out.append(("h2", self.verifier_keys.h2))
        if self.prover_keys is not None and (
            self.verifier_keys is None or self.prover_keys.h2 != self.verifier_keys.h2
        ):
            out.append(("h2'", self.prover_keys.h2))
        if self.fragment_plain is not None:
            out.append(("fragment plaintext", self.fragment_plain))
        return out


def verdict(qber_est: float, t_v: float) -> bool:
    """Accept iff the estimated error rate is strictly below the threshold."""
    if not 0.0 <= qber_est <= 1.0:
        raise ValueError("qber_est must be in [0, 1]")
    return qber_est < t_v


def select_fragment(delta: BitString, n: int) -> Tuple[BitString, BitString]:
    """Deterministic prefix rule both parties apply without communication."""
    if len(delta) < n:
        raise InsufficientDetectionsError(
            f"sifted string has {len(delta)} bits, fragment needs {n}"
        )
    return delta[:n], delta[n:]


def sift(
    alice_record: Union[SymbolBlock, Sequence[EmittedSymbol]],
    announced_slots: Sequence[int],
) -> BitString:
    """Project the transmitter's prepared bits onto the announced slots.

    The slots are the receiver's single-click signal instants; no basis
    information is carried. Out-of-range or non-increasing indices are a
    protocol violation.
    """
    if isinstance(alice_record, SymbolBlock):
        base, bits, count = alice_record.base_slot, alice_record.bits, len(alice_record)
    else:
        base = alice_record[0].slot if alice_record else 0
        bits = np.array([s.bit for s in alice_record], dtype=np.uint8)
        count = len(alice_record)
    slots = np.asarray(announced_slots, dtype=np.int64)
    if slots.size:
        if np.any(np.diff(slots) <= 0):
            raise ProtocolViolation("announced slots not strictly increasing")
        if slots[0] < base or slots[-1] >= base + count:
            raise ProtocolViolation("announced slot out of block range")
    return BitString(bits[slots - base])


def fragment_exchange(
    delta_b_fragment: BitString,
    h2_prover: BitString,
    h2_verifier: BitString,
) -> Tuple[BitString, BitString]:
    """One-time-pad masking and unmasking of the comparison fragment.

    Returns (ciphertext as sent, fragment as recovered by the verifier);
    recovery is exact iff both pads are equal.
    """
    ciphertext = xor(delta_b_fragment, h2_prover)
    recovered = xor(ciphertext, h2_verifier)
    return ciphertext, recovered


def alice_prepare_block(
    schedule_block: BitString,
    plan: IntensityPlan,
    rng: RngStream,
    base_slot: int = 0,
    bases: Optional[np.ndarray] = None,
) -> SymbolBlock:
    """Prepare one block: bases from the schedule (bit 0 -> Z, 1 -> X),
    uniform random state bits, intensity classes sampled from the plan."""
    m = len(schedule_block)
    if bases is None:
        bases = schedule_block.bits.copy()
    bits = rng.bits(m)
    u = rng.uniform(m)
    intensities = ((u >= plan.p_mu).astype(np.uint8)
                   + (u >= plan.p_mu + plan.p_nu).astype(np.uint8))
    return SymbolBlock(base_slot, bases, bits, intensities)


def bob_measure_block(
    block_pulses: Pulses,
    bob_bases: np.ndarray,
    cfg: ProtocolConfig,
    rng_channel: RngStream,
):
    """Measure a received block: channel + detector sampling per slot."""
    base_slot = block_pulses.block_index * len(block_pulses.bases)
    block = SymbolBlock(base_slot, block_pulses.bases, block_pulses.bits,
                        block_pulses.intensities)
    return simulate_block(block, bob_bases, cfg.intensity, cfg.channel, cfg.detector,
                          rng_channel)


def handshake(
    chan: MessageChannel,
    cfg: ProtocolConfig,
    round_index: int,
    clock: Callable[[], int],
    version: int = PROTOCOL_VERSION,
) -> int:
    """Verifier side: propose a timestamp, require an exact echo."""
    t0 = clock()
    chan.send(Hello(version, t0, round_index, cfg.verifier_id))
    ack = chan.recv()
    if isinstance(ack, Abort):
        raise HandshakeError(f"peer aborted: {ack.message}")
    if not isinstance(ack, HelloAck):
        raise ProtocolViolation(f"expected HELLO_ACK, got {type(ack).__name__}")
    if ack.t0_echo != t0:
        chan.send(Abort(ABORT_ECHO, "timestamp echo mismatch"))
        raise HandshakeError(f"timestamp echo mismatch: sent {t0}, got {ack.t0_echo}")
    return t0


def _expect(msg, kind):
    if isinstance(msg, Abort):
        raise ProtocolViolation(f"peer aborted: {msg.message}")
    if not isinstance(msg, kind):
        raise ProtocolViolation(f"expected {kind.__name__}, got {type(msg).__name__}")
    return msg


def verifier_round(
    chan: MessageChannel,
    cfg: ProtocolConfig,
    secret: bytes,
    strategy: VerifierStrategy,
    rng_root: RngStream,
    round_index: int,
    clock: Optional[Callable[[], int]] = None,
    capture: Optional[RoundCapture] = None,
    version: int = PROTOCOL_VERSION,
) -> RoundResult:
    """Run one round as the verifier; returns the round verdict."""
    rng = rng_root.child(round_index).child(_STREAM_VERIFIER)
    if clock is None:
        clock = model_clock(cfg, round_index)
    t0 = handshake(chan, cfg, round_index, clock, version)
    secret_material = kdf.SecretMaterial(secret, t0)
    prk = kdf.extract(secret_material)
    keys = kdf.derive_session_keys(secret_material, cfg.m, cfg.n, context=cfg.kdf_context)
    if capture is not None:
        capture.verifier_keys = keys
        capture.verifier_transcript = chan.transcript

    sifted: List[np.ndarray] = []
    sifted_len = 0
    pulses_sent = 0
    block_index = 0
    while sifted_len < cfg.target_sifted_len:
        if block_index >= cfg.max_blocks_per_round:
            chan.send(Abort(ABORT_NO_DETECTIONS, "insufficient detections"))
            raise InsufficientDetectionsError(
                f"insufficient detections: {sifted_len} sifted bits "
                f"after {block_index} blocks"
            )
        schedule = kdf.basis_block(prk, block_index, cfg.m, keys, context=cfg.kdf_context)
        bases = verifier_bases_block(strategy, schedule, rng)
        block = alice_prepare_block(schedule, cfg.intensity, rng,
                                    base_slot=block_index * cfg.m, bases=bases)
        if capture is not None:
            capture.verifier_schedule_blocks.append(schedule)
        chan.send(RoundBegin(block_index, cfg.m))
        chan.send(Pulses(block_index, block.bases, block.bits, block.intensities))

        announced = _expect(chan.recv(), Detections)
        slots = np.asarray(announced.slots, dtype=np.int64)
        if slots.size and (slots[0] < block.base_slot or slots[-1] >= block.base_slot + cfg.m):
            chan.send(Abort(ABORT_VIOLATION, "announced slot out of range"))
            raise ProtocolViolation("announced slot out of block range")
        keep = slots[block.intensities[slots - block.base_slot] == Intensity.SIGNAL]
        chan.send(Detections(tuple(int(s) for s in keep)))
        if keep.size:
            sifted.append(block.bits[keep - block.base_slot])
            sifted_len += keep.size
        pulses_sent += cfg.m
        block_index += 1

    delta_a = BitString(np.concatenate(sifted)[: cfg.target_sifted_len])
    if capture is not None:
        capture.delta_a = delta_a

    frag = _expect(chan.recv(), Fragment)
    if len(frag.ciphertext) != cfg.n:
        chan.send(Abort(ABORT_VIOLATION, "fragment length mismatch"))
        raise ProtocolViolation(
            f"fragment carries {len(frag.ciphertext)} bits, expected {cfg.n}"
        )
    recovered = xor(frag.ciphertext, keys.h2)
    delta_a_frag, _ = select_fragment(delta_a, cfg.n)
    qber_est = hamming_fraction(delta_a_frag, recovered)
    accepted = verdict(qber_est, cfg.t_v)
    chan.send(Verdict(accepted, qber_est))
    return RoundResult(
        qber_est=qber_est,
        accepted=accepted,
        sifted_len=len(delta_a),
        pulses_sent=pulses_sent,
        elapsed_model_s=pulses_sent / cfg.rep_rate_hz,
    )


@dataclass(frozen=True)
class ProverOutcome:
    accepted: bool
    qber: float


def prover_round(
    chan: MessageChannel,
    cfg: ProtocolConfig,
    secret: bytes,
    strategy: ProverStrategy,
    rng_root: RngStream,
    capture: Optional[RoundCapture] = None,
) -> ProverOutcome:
    """Run one round as the prover; the channel simulation happens on this
    side so two-process runs draw from the same stream as in-process ones.
    Strategy and channel streams derive from the round index announced in
    the handshake."""
    hello = _expect(chan.recv(), Hello)
    if hello.version != PROTOCOL_VERSION:
        chan.send(Abort(ABORT_VERSION, f"unsupported protocol version {hello.version}"))
        raise HandshakeError(f"unsupported protocol version {hello.version}")
    chan.send(HelloAck(hello.t0, cfg.prover_id))
    rng = rng_root.child(hello.round_index).child(_STREAM_PROVER)
    rng_channel = rng_root.child(hello.round_index).child(_STREAM_CHANNEL)

    secret_material = kdf.SecretMaterial(secret, hello.t0)
    prk = kdf.extract(secret_material)
    keys = kdf.derive_session_keys(secret_material, cfg.m, cfg.n, context=cfg.kdf_context)
    if capture is not None:
        capture.prover_keys = keys
        capture.prover_transcript = chan.transcript

    sifted: List[np.ndarray] = []
    sifted_len = 0
    while sifted_len < cfg.target_sifted_len:
        begin = _expect(chan.recv(), RoundBegin)
        if begin.block_len != cfg.m:
            chan.send(Abort(ABORT_VIOLATION, "block length differs from configuration"))
            raise ProtocolViolation(f"block length {begin.block_len} != configured {cfg.m}")
        pulses = _expect(chan.recv(), Pulses)
        if pulses.block_index != begin.block_index or len(pulses.bases) != cfg.m:
            chan.send(Abort(ABORT_VIOLATION, "pulse block does not match announcement"))
            raise ProtocolViolation("pulse block does not match announcement")

        schedule = (
            kdf.basis_block(prk, begin.block_index, cfg.m, keys, context=cfg.kdf_context)
            if strategy.kind == StrategyKind.HONEST
            else None
        )
        bob_bases = prover_bases_block(strategy, schedule, cfg.m, rng)
        events = bob_measure_block(pulses, bob_bases, cfg, rng_channel)
        singles = events.single_slots()
        chan.send(Detections(tuple(int(s) for s in singles)))

        kept = _expect(chan.recv(), Detections)
        kept_arr = np.asarray(kept.slots, dtype=np.int64)
        if kept_arr.size and not np.isin(kept_arr, singles).all():
            chan.send(Abort(ABORT_VIOLATION, "kept slot was never announced"))
            raise ProtocolViolation("verifier kept a slot the prover never announced")
        if kept_arr.size:
            sifted.append(events.bits[kept_arr - events.base_slot])
            sifted_len += kept_arr.size

    delta_b = BitString(np.concatenate(sifted)[: cfg.target_sifted_len])
    fragment_plain, _ = select_fragment(delta_b, cfg.n)
    ciphertext = xor(fragment_plain, keys.h2)
    if capture is not None:
        capture.delta_b = delta_b
        capture.fragment_plain = fragment_plain
    chan.send(Fragment(ciphertext))

    result = _expect(chan.recv(), Verdict)
    return ProverOutcome(result.accepted, result.qber)


def model_clock(cfg: ProtocolConfig, round_index: int) -> Callable[[], int]:
    """Deterministic handshake clock: one millisecond tick per round."""
    return lambda: cfg.t0_base_ms + round_index


def run_round(
    cfg: ProtocolConfig,
    verifier_secret: bytes,
    prover_secret: Optional[bytes] = None,
    prover_strategy: ProverStrategy = ProverStrategy(),
    verifier_strategy: VerifierStrategy = VerifierStrategy(),
    rng_root: Optional[RngStream] = None,
    seed: int = 0,
    round_index: int = 0,
    capture: Optional[RoundCapture] = None,
    clock: Optional[Callable[[], int]] = None,
) -> RoundResult:
    """Execute one in-process round over an in-memory channel.

    Protocol violations abort the round and surface as a reject-equivalent
    result with the violation recorded; they never yield an accept.
    """
    if prover_secret is None:
        prover_secret = verifier_secret
    if rng_root is None:
        rng_root = RngStream(seed)
    v_chan, p_chan = memory_channel_pair()

    prover_error: List[BaseException] = []

    def prover_main():
        try:
            prover_round(p_chan, cfg, prover_secret, prover_strategy, rng_root, capture)
        except BaseException as e:  # surfaced after join
            prover_error.append(e)
        finally:
            p_chan.close()

    worker = threading.Thread(target=prover_main, name="prover", daemon=True)
    worker.start()
    violation: Optional[str] = None
    try:
        result = verifier_round(v_chan, cfg, verifier_secret, verifier_strategy,
                                rng_root, round_index, clock, capture)
    except (ProtocolViolation, InsufficientDetectionsError, DecodeError) as e:
        violation = str(e)
        result = RoundResult(
            qber_est=1.0, accepted=False, sifted_len=0, pulses_sent=0,
            elapsed_model_s=0.0, violation=violation,
        )
    finally:
        v_chan.close()
        worker.join(timeout=60.0)
    if violation is None and prover_error and not isinstance(
        prover_error[0], (ProtocolViolation, InsufficientDetectionsError, DecodeError)
    ):
        raise prover_error[0]
    return result


RoundHook = Callable[[int, RoundResult, Optional[RoundCapture]], None]


def run_session(
    cfg: ProtocolConfig,
    verifier_secret: bytes,
    prover_secret: Optional[bytes] = None,
    prover_strategy: ProverStrategy = ProverStrategy(),
    verifier_strategy: VerifierStrategy = VerifierStrategy(),
    seed: int = 0,
    captures: Optional[List[RoundCapture]] = None,
    round_hook: Optional[RoundHook] = None,
) -> SessionStats:
    """Run the configured number of independent rounds and aggregate.

    Each round re-handshakes (fresh timestamp, fresh keys) and owns
    independent random streams derived from (seed, round index). With a
    ``round_hook`` the per-round capture is handed to the hook and then
    dropped, so long sessions can be audited without holding every
    transcript in memory; ``captures`` keeps them all.
    """
    rng_root = RngStream(seed)
    want_capture = captures is not None or round_hook is not None
    rounds: List[RoundResult] = []
    for i in range(cfg.iterations):
        capture = RoundCapture() if want_capture else None
        result = run_round(
            cfg,
            verifier_secret,
            prover_secret,
            prover_strategy,
            verifier_strategy,
            rng_root=rng_root,
            round_index=i,
            capture=capture,
        )
        rounds.append(result)
        if captures is not None:
            captures.append(capture)
        if round_hook is not None:
            round_hook(i, result, capture)
    return summarize(rounds)


def summarize(rounds: Sequence[RoundResult]) -> SessionStats:
    clean = [r.qber_est for r in rounds if r.violation is None]
    if clean:
        mean = float(np.mean(clean))
        sigma = float(np.std(clean, ddof=1)) if len(clean) > 1 else 0.0
    else:
        mean, sigma = math.nan, math.nan
    return SessionStats(
        mean_qber=mean,
        sigma_qber=sigma,
        accept_count=sum(r.accepted for r in rounds),
        rounds=tuple(rounds),
        sigma_defined=len(clean) > 1,
    )
