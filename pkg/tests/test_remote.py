import dataclasses
import threading

import pytest

from qzkauth.adversary import ProverStrategy, StrategyKind
from qzkauth.config import load_preset
from qzkauth.core import RngStream
from qzkauth.errors import HandshakeError
from qzkauth.photonics import ChannelModel, DetectorModel
from qzkauth.protocol import PROTOCOL_VERSION, ProtocolConfig, RoundCapture, run_round
from qzkauth.remote import VerifierServer, parse_addr, run_prover_client
from qzkauth.transport import Abort


def small_cfg(iterations, **kw):
    base = load_preset("honest-b2b")
    protocol = dataclasses.replace(base.protocol, iterations=iterations,
                                   target_sifted_len=512, **kw)
    return dataclasses.replace(base, protocol=protocol)


def serve_in_thread(cfg, results, hook=None, version=PROTOCOL_VERSION):
    server = VerifierServer(cfg, "127.0.0.1", 0, timeout=30.0)

    def run():
        try:
            results["stats"] = server.serve_rounds(round_hook=hook, version=version)
        finally:
            server.close()

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    return server, thread


def test_parse_addr():
    assert parse_addr("127.0.0.1:7741") == ("127.0.0.1", 7741)
    assert parse_addr(":80") == ("127.0.0.1", 80)
    with pytest.raises(ValueError):
        parse_addr("nohost")
    with pytest.raises(ValueError):
        parse_addr("host:port")


def test_tcp_round_trip_matches_in_process_transcripts():
    cfg = small_cfg(3)
    tcp_frames = []
    results = {}
    server, thread = serve_in_thread(
        cfg, results,
        hook=lambda i, r, c: tcp_frames.append(c.verifier_transcript.frames()),
    )
    outcomes = run_prover_client(cfg, server.host, server.port)
    thread.join(30.0)
    assert all(o.accepted for o in outcomes)
    stats = results["stats"]
    assert stats.accept_count == 3

    rng_root = RngStream(cfg.seed)
    for i in range(3):
        capture = RoundCapture()
        result = run_round(cfg.protocol, cfg.secret, rng_root=rng_root, round_index=i,
                           capture=capture)
        assert capture.verifier_transcript.frames() == tcp_frames[i]
        assert result.qber_est == stats.rounds[i].qber_est


def test_tcp_random_basis_prover_rejected_in_band():
    cfg = small_cfg(25, target_sifted_len=2048)
    cfg = dataclasses.replace(
        cfg, prover_strategy=ProverStrategy(StrategyKind.RANDOM_BASIS, 0.5))
    results = {}
    server, thread = serve_in_thread(cfg, results)
    outcomes = run_prover_client(cfg, server.host, server.port)
    thread.join(60.0)
    stats = results["stats"]
    assert stats.accept_count == 0
    assert not any(o.accepted for o in outcomes)
    assert 0.244 <= stats.mean_qber <= 0.289


def test_tcp_wrong_secret_rejected():
    cfg = small_cfg(4)
    cfg = dataclasses.replace(cfg, prover_secret=b"an entirely different secret")
    results = {}
    server, thread = serve_in_thread(cfg, results)
    outcomes = run_prover_client(cfg, server.host, server.port)
    thread.join(30.0)
    stats = results["stats"]
    assert stats.accept_count == 0 and not any(o.accepted for o in outcomes)
    assert abs(stats.mean_qber - 0.5) < 0.1  # scrambled pad, not just basis noise


def test_tcp_version_mismatch_aborts():
    cfg = small_cfg(1)
    captures = []
    results = {}
    server, thread = serve_in_thread(
        cfg, results, hook=lambda i, r, c: captures.append(c),
        version=PROTOCOL_VERSION + 1,
    )
    with pytest.raises(HandshakeError):
        run_prover_client(cfg, server.host, server.port)
    thread.join(30.0)
    stats = results["stats"]
    assert stats.accept_count == 0
    assert stats.rounds[0].violation is not None
    assert "version" in stats.rounds[0].violation
    transcript = captures[0].verifier_transcript
    assert any(isinstance(m, Abort) for m in transcript.messages())
