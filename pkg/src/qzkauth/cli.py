"""Command-line front end.

Subcommands: run (session per config), sweep (loss sweep to CSV), calibrate
(fit the dark-count knob to a target error floor), serve / connect
(two-process verifier and prover over TCP). Every path that runs rounds
also audits the classical transcripts for leaked key material and fails
loudly on a violation.

Exit codes: 0 success, 1 configuration error, 2 protocol violation or
transcript-audit failure, 3 acceptance-band failure under --check.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from typing import List, Optional

from .adversary import ProverStrategy, StrategyKind
from .analysis import build_sweep, sweep_to_csv
from .calibration import calibrate_dark_prob
from .config import (
    CheckBands,
    RunConfig,
    apply_noiseless,
    dump_config,
    load_config,
    load_preset,
    preset_names,
)
from .errors import CalibrationError, ConfigError, DecodeError, ProtocolViolation
from .protocol import RoundCapture, RoundResult, SessionStats, run_session
from .remote import VerifierServer, parse_addr, run_prover_client
from .transport import transcript_audit

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PROTOCOL = 2
EXIT_CHECK = 3

ROUND_CSV_COLUMNS = ("round", "qber_est", "accepted", "sifted_len",
                     "pulses_sent", "elapsed_model_s", "violation")


class AuditAccumulator:
    """Per-round transcript audits plus the pooled fragment-balance tally."""

    def __init__(self, min_window_bits: int = 64):
        self.min_window_bits = min_window_bits
        self.rounds = 0
        self.violations: List[str] = []
        self.fragment_ones = 0
        self.fragment_bits = 0

    def add_capture(self, round_index: int, capture: Optional[RoundCapture]) -> None:
        if capture is None:
            return
        transcript = capture.verifier_transcript or capture.prover_transcript
        if transcript is None:
            return
        report = transcript_audit(transcript, capture.forbidden_material(),
                                  self.min_window_bits)
        self.rounds += 1
        self.fragment_ones += report.fragment_ones
        self.fragment_bits += report.fragment_bits
        if not report.passed:
            self.violations.extend(f"round {round_index}: {v}" for v in report.violations)

    @property
    def ones_fraction(self) -> Optional[float]:
        if self.fragment_bits == 0:
            return None
        return self.fragment_ones / self.fragment_bits

    def summary(self) -> str:
        frac = self.ones_fraction
        frac_txt = f"{frac:.4f}" if frac is not None else "n/a"
        state = "clean" if not self.violations else f"{len(self.violations)} VIOLATION(S)"
        return (f"audit: {self.rounds} round(s) {state}; "
                f"fragment ones fraction {frac_txt} over {self.fragment_bits} bits")


def _load(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = load_preset(args.preset or "honest-b2b")

    protocol = cfg.protocol
    if getattr(args, "iterations", None) is not None:
        protocol = dataclasses.replace(protocol, iterations=args.iterations)
    cfg = dataclasses.replace(cfg, protocol=protocol)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "secret", None) is not None:
        cfg = dataclasses.replace(cfg, secret=args.secret.encode("utf-8"))
    if getattr(args, "prover_secret", None) is not None:
        cfg = dataclasses.replace(cfg, prover_secret=args.prover_secret.encode("utf-8"))
    if getattr(args, "honest", False):
        cfg = dataclasses.replace(cfg, prover_strategy=ProverStrategy(StrategyKind.HONEST))
    elif getattr(args, "strategy", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            prover_strategy=ProverStrategy(StrategyKind(args.strategy),
                                           cfg.prover_strategy.p_b_z),
        )
    if getattr(args, "noiseless", False):
        cfg = apply_noiseless(cfg)
    return cfg


def _write_round_csv(path: str, rounds) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROUND_CSV_COLUMNS)
        for i, r in enumerate(rounds):
            writer.writerow([i, f"{r.qber_est:.6f}", int(r.accepted), r.sifted_len,
                             r.pulses_sent, f"{r.elapsed_model_s:.6f}",
                             r.violation or ""])


def _stats_json(stats: SessionStats, audit: AuditAccumulator) -> dict:
    return {
        "mean_qber": stats.mean_qber,
        "sigma_qber": stats.sigma_qber,
        "sigma_defined": stats.sigma_defined,
        "accept_count": stats.accept_count,
        "rounds": [dataclasses.asdict(r) for r in stats.rounds],
        "audit": {
            "rounds": audit.rounds,
            "violations": audit.violations,
            "fragment_ones_fraction": audit.ones_fraction,
            "fragment_bits": audit.fragment_bits,
        },
    }


def _check_session(check: Optional[CheckBands], stats: SessionStats,
                   audit: AuditAccumulator) -> List[str]:
    if check is None:
        raise ConfigError("--check requires a check block in the configuration")
    failures = []
    n_rounds = len(stats.rounds)
    if check.qber_mean_min is not None and not stats.mean_qber >= check.qber_mean_min:
        failures.append(f"mean {stats.mean_qber:.4f} below {check.qber_mean_min}")
    if check.qber_mean_max is not None and not stats.mean_qber <= check.qber_mean_max:
        failures.append(f"mean {stats.mean_qber:.4f} above {check.qber_mean_max}")
    if check.qber_sigma_min is not None and not stats.sigma_qber >= check.qber_sigma_min:
        failures.append(f"sigma {stats.sigma_qber:.4f} below {check.qber_sigma_min}")
    if check.qber_sigma_max is not None and not stats.sigma_qber <= check.qber_sigma_max:
        failures.append(f"sigma {stats.sigma_qber:.4f} above {check.qber_sigma_max}")
    if check.expect == "accept-all" and stats.accept_count != n_rounds:
        failures.append(f"accepted {stats.accept_count}/{n_rounds}, expected all")
    if check.expect == "reject-all" and stats.accept_count != 0:
        failures.append(f"accepted {stats.accept_count}/{n_rounds}, expected none")
    frac = audit.ones_fraction
    if n_rounds >= 100 and frac is not None and not 0.47 <= frac <= 0.53:
        failures.append(f"fragment ones fraction {frac:.4f} outside [0.47, 0.53]")
    return failures


def cmd_run(args) -> int:
    cfg = _load(args)
    audit = AuditAccumulator()

    def hook(i: int, result: RoundResult, capture: Optional[RoundCapture]) -> None:
        audit.add_capture(i, capture)

    stats = run_session(
        cfg.protocol, cfg.secret, cfg.effective_prover_secret,
        cfg.prover_strategy, cfg.verifier_strategy, seed=cfg.seed, round_hook=hook,
    )
    n = len(stats.rounds)
    print(f"rounds={n} accepted={stats.accept_count} "
          f"mean_qber={stats.mean_qber:.6f} sigma_qber={stats.sigma_qber:.6f}")
    print(audit.summary())
    if args.csv:
        _write_round_csv(args.csv, stats.rounds)
        print(f"per-round CSV written to {args.csv}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(_stats_json(stats, audit), fh, indent=2)
        print(f"JSON written to {args.json}")
    if audit.violations:
        for v in audit.violations:
            print(f"AUDIT VIOLATION: {v}", file=sys.stderr)
        return EXIT_PROTOCOL
    if any(r.violation for r in stats.rounds):
        return EXIT_PROTOCOL
    if args.check:
        failures = _check_session(cfg.check, stats, audit)
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK
        print("check: all bands satisfied")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.sweep:
        raise ConfigError("sweep command requires a sweep block in the configuration")
    audit = AuditAccumulator()
    counter = {"i": 0}

    def hook(i: int, result: RoundResult, capture: Optional[RoundCapture]) -> None:
        audit.add_capture(counter["i"], capture)
        counter["i"] += 1

    rows = build_sweep(cfg.sweep, cfg.protocol, cfg.secret, seed=cfg.seed,
                       round_hook=hook)
    text = sweep_to_csv(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
        print(f"sweep CSV written to {args.csv}")
    else:
        sys.stdout.write(text)
    print(audit.summary())
    if audit.violations:
        for v in audit.violations:
            print(f"AUDIT VIOLATION: {v}", file=sys.stderr)
        return EXIT_PROTOCOL
    if args.check:
        if cfg.check is None:
            raise ConfigError("--check requires a check block in the configuration")
        failures = []
        limit = cfg.check.sweep_qber_max
        for row in rows:
            if limit is not None and not row.qber_mean < limit:
                failures.append(f"{row.losses_db} dB: mean {row.qber_mean:.4f} >= {limit}")
            if not row.qber_mean < cfg.protocol.t_v:
                failures.append(f"{row.losses_db} dB: mean {row.qber_mean:.4f} "
                                f">= threshold {cfg.protocol.t_v}")
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK
        print("check: all bands satisfied")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    protocol = cfg.protocol
    if args.er_db is not None:
        protocol = dataclasses.replace(
            protocol,
            detector=dataclasses.replace(protocol.detector,
                                         extinction_ratio_db=args.er_db),
        )
    result = calibrate_dark_prob(
        protocol, args.target, secret=cfg.secret, seed=cfg.seed,
        rounds=args.rounds, tolerance=args.tolerance,
    )
    print(f"dark_prob={result.dark_prob:.6e} achieved_qber={result.achieved_qber:.6f} "
          f"({result.rounds} rounds/probe, {result.iterations} bisection steps)",
          file=sys.stderr)
    calibrated = dataclasses.replace(
        cfg,
        protocol=dataclasses.replace(
            protocol,
            detector=dataclasses.replace(protocol.detector,
                                         dark_prob=result.dark_prob),
        ),
    )
    text = dump_config(calibrated)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"calibrated config written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load(args)
    audit = AuditAccumulator()

    def hook(i: int, result: RoundResult, capture: Optional[RoundCapture]) -> None:
        audit.add_capture(i, capture)

    host, port = parse_addr(args.listen)
    with VerifierServer(cfg, host, port) as server:
        print(f"listening on {server.host}:{server.port}", flush=True)
        stats = server.serve_rounds(round_hook=hook)
    n = len(stats.rounds)
    print(f"rounds={n} accepted={stats.accept_count} "
          f"mean_qber={stats.mean_qber:.6f} sigma_qber={stats.sigma_qber:.6f}")
    print(audit.summary())
    if args.csv:
        _write_round_csv(args.csv, stats.rounds)
    if audit.violations:
        for v in audit.violations:
            print(f"AUDIT VIOLATION: {v}", file=sys.stderr)
        return EXIT_PROTOCOL
    if any(r.violation for r in stats.rounds):
        return EXIT_PROTOCOL
    if args.check:
        failures = _check_session(cfg.check, stats, audit)
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK
        print("check: all bands satisfied")
    return EXIT_OK


def cmd_connect(args) -> int:
    cfg = _load(args)
    host, port = parse_addr(args.connect)
    captures: List[RoundCapture] = []
    outcomes = run_prover_client(cfg, host, port, captures=captures)
    audit = AuditAccumulator()
    for i, capture in enumerate(captures):
        audit.add_capture(i, capture)
    accepted = sum(o.accepted for o in outcomes)
    mean = sum(o.qber for o in outcomes) / len(outcomes) if outcomes else float("nan")
    print(f"rounds={len(outcomes)} accepted={accepted} mean_qber={mean:.6f}")
    print(audit.summary())
    if audit.violations:
        for v in audit.violations:
            print(f"AUDIT VIOLATION: {v}", file=sys.stderr)
        return EXIT_PROTOCOL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qzkauth",
        description="Simulate interactive zero-knowledge authentication over a "
                    "BB84-style photonic link.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, iterations=True):
        p.add_argument("--config", help="YAML configuration file "
                       "(searched in $QZKAUTH_CONFIG_DIR if not found directly)")
        p.add_argument("--preset", choices=preset_names(),
                       help="built-in configuration (default: honest-b2b)")
        p.add_argument("--seed", type=int, help="override the run seed")
        if iterations:
            p.add_argument("--iterations", type=int, help="override round count")
        p.add_argument("--strategy", choices=[k.value for k in StrategyKind],
                       help="prover strategy override")
        p.add_argument("--honest", action="store_true",
                       help="force the honest prover strategy")
        p.add_argument("--secret", help="override the shared secret")
        p.add_argument("--prover-secret", help="give the prover a different secret")
        p.add_argument("--noiseless", action="store_true",
                       help="ideal channel and detectors")
        p.add_argument("--check", action="store_true",
                       help="verify the config's expected-outcome bands")

    p_run = sub.add_parser("run", help="run a session in-process")
    add_common(p_run)
    p_run.add_argument("--csv", help="write per-round results to this CSV file")
    p_run.add_argument("--json", help="write session stats to this JSON file")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the configured loss sweep")
    add_common(p_sweep, iterations=False)
    p_sweep.add_argument("--csv", help="write sweep rows to this CSV file "
                         "(default: stdout)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cal = sub.add_parser("calibrate",
                           help="fit dark_prob to a target honest error floor")
    add_common(p_cal, iterations=False)
    p_cal.add_argument("--target", type=float, default=0.029,
                       help="target mean error floor (default 0.029)")
    p_cal.add_argument("--er-db", type=float, default=None,
                       help="fix the extinction ratio during calibration")
    p_cal.add_argument("--rounds", type=int, default=50,
                       help="simulated rounds per bisection probe")
    p_cal.add_argument("--tolerance", type=float, default=1e-3,
                       help="acceptable |achieved - target|")
    p_cal.add_argument("--out", help="write the calibrated config here "
                       "(default: stdout)")
    p_cal.set_defaults(func=cmd_calibrate)

    p_serve = sub.add_parser("serve", help="verifier endpoint over TCP")
    add_common(p_serve)
    p_serve.add_argument("--listen", default="127.0.0.1:7741",
                         help="host:port to listen on (port 0 for ephemeral)")
    p_serve.add_argument("--csv", help="write per-round results to this CSV file")
    p_serve.set_defaults(func=cmd_serve)

    p_conn = sub.add_parser("connect", help="prover endpoint over TCP")
    add_common(p_conn)
    p_conn.add_argument("--connect", default="127.0.0.1:7741",
                        help="verifier host:port")
    p_conn.set_defaults(func=cmd_connect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolViolation, DecodeError) as e:
        print(f"protocol violation: {e}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
