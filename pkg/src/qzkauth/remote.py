"""Two-process mode: verifier listens, prover connects, one round per
connection. Frames on the wire are identical to the in-memory channel, so
equal seeds and configs reproduce the in-process transcripts byte for byte.
"""

from __future__ import annotations

import socket
from typing import List, Optional, Tuple

from .core import RngStream
from .config import RunConfig
from .errors import DecodeError, InsufficientDetectionsError, ProtocolViolation
from .protocol import (
    PROTOCOL_VERSION,
    ProverOutcome,
    RoundCapture,
    RoundHook,
    RoundResult,
    SessionStats,
    prover_round,
    summarize,
    verifier_round,
)
from .transport import MessageChannel, SocketTransport

__all__ = ["VerifierServer", "run_prover_client", "parse_addr"]


def parse_addr(addr: str) -> Tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class VerifierServer:
    """Verifier endpoint accepting one prover connection per round."""

    def __init__(self, cfg: RunConfig, host: str = "127.0.0.1", port: int = 0,
                 timeout: float = 60.0):
        self.cfg = cfg
        self._timeout = timeout
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)
        self._sock.settimeout(timeout)
        self.host, self.port = self._sock.getsockname()

    def serve_rounds(self, round_hook: Optional[RoundHook] = None,
                     version: int = PROTOCOL_VERSION) -> SessionStats:
        cfg = self.cfg
        rng_root = RngStream(cfg.seed)
        rounds: List[RoundResult] = []
        for i in range(cfg.protocol.iterations):
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                raise ProtocolViolation("no prover connection before timeout") from None
            chan = MessageChannel(SocketTransport(conn, self._timeout))
            capture = RoundCapture() if round_hook is not None else None
            try:
                result = verifier_round(
                    chan, cfg.protocol, cfg.secret, cfg.verifier_strategy,
                    rng_root, i, capture=capture, version=version,
                )
            except (ProtocolViolation, InsufficientDetectionsError, DecodeError) as e:
                result = RoundResult(qber_est=1.0, accepted=False, sifted_len=0,
                                     pulses_sent=0, elapsed_model_s=0.0, violation=str(e))
            finally:
                chan.close()
            rounds.append(result)
            if round_hook is not None:
                round_hook(i, result, capture)
        return summarize(rounds)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_prover_client(
    cfg: RunConfig,
    host: str,
    port: int,
    timeout: float = 60.0,
    captures: Optional[List[RoundCapture]] = None,
) -> List[ProverOutcome]:
    """Run the configured number of rounds, reconnecting for each."""
    rng_root = RngStream(cfg.seed)
    outcomes: List[ProverOutcome] = []
    for _ in range(cfg.protocol.iterations):
        sock = socket.create_connection((host, port), timeout=timeout)
        chan = MessageChannel(SocketTransport(sock, timeout))
        capture = RoundCapture() if captures is not None else None
        try:
            outcomes.append(
                prover_round(chan, cfg.protocol, cfg.effective_prover_secret,
                             cfg.prover_strategy, rng_root, capture)
            )
        finally:
            chan.close()
        if captures is not None:
            captures.append(capture)
    return outcomes
