"""Closed-form error-rate analysis and sweep reproduction.

The biased-basis error-rate formula weights each preparation basis by the
square of its preparation probability (the reconciled biased-basis model of
the security analysis); at r = 1/2 it coincides with the protocol's
no-reconciliation sifting and is constant at 25% in the attacker's basis
bias. The sweep harness runs sessions per loss point and emits rows in the
schema distance_km, losses_db, L_delta, iterations, time_s_per_bit,
qber_mean, qber_sigma.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .core import BitString, hamming_fraction
from .errors import ConfigError
from .photonics import ChannelModel
from .protocol import ProtocolConfig, run_session

__all__ = [
    "QberTheoryInputs",
    "theoretical_qber",
    "optimal_attack_qber",
    "qber_sampling_sigma",
    "real_vs_estimated",
    "SweepPoint",
    "SweepRow",
    "build_sweep",
    "sweep_to_csv",
    "sweep_to_markdown",
]

_FORM_TOL = 1e-12


@dataclass(frozen=True)
class QberTheoryInputs:
    """Inputs to the biased-basis error-rate formula.

    r is the X-basis preparation fraction, p_b_z the prover's Z-measurement
    probability; p_mu scales Alice's per-class preparation probabilities and
    cancels in the rate.
    """

    r: float
    p_b_z: float
    p_mu: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r <= 0.5:
            raise ConfigError("r must be in (0, 0.5]")
        if not 0.0 <= self.p_b_z <= 1.0:
            raise ConfigError("p_b_z must be in [0, 1]")
        if not 0.0 < self.p_mu <= 1.0:
            raise ConfigError("p_mu must be in (0, 1]")

    @property
    def p_b_x(self) -> float:
        return 1.0 - self.p_b_z

    @property
    def e_b_z(self) -> float:
        """Error rate for Z-prepared states: wrong-basis measurement half wrong."""
        return self.p_b_x / 2.0

    @property
    def e_b_x(self) -> float:
        return self.p_b_z / 2.0

    @property
    def p_a_z(self) -> float:
        return (1.0 - self.r) * self.p_mu

    @property
    def p_a_x(self) -> float:
        return self.r * self.p_mu


def theoretical_qber(inp: QberTheoryInputs) -> float:
    """Expected error rate against a basis-blind prover.

    Computed in both algebraic forms (preparation-weighted error average and
    the reduced rational form); they must agree to 1e-12 or the inputs are
    inconsistent.
    """
    weighted = (inp.p_a_z**2 * inp.e_b_z + inp.p_a_x**2 * inp.e_b_x) / (
        inp.p_a_z**2 + inp.p_a_x**2
    )
    r = inp.r
    reduced = ((1.0 - r) ** 2 * inp.p_b_x + r**2 * inp.p_b_z) / (
        2.0 * ((1.0 - r) ** 2 + r**2)
    )
    if abs(weighted - reduced) > _FORM_TOL:
        raise AssertionError(f"formula forms disagree: {weighted} vs {reduced}")
    return reduced


def optimal_attack_qber(r: float) -> tuple[float, float]:
    """Minimum achievable error rate over the attacker's basis bias.

    The rate is linear in p_b_z with slope (2r - 1) <= 0 on (0, 1/2], so the
    minimum sits at p_b_z = 1, giving r^2 / (2((1-r)^2 + r^2)); at r = 1/2
    the rate is flat at 25% for every bias.
    """
    if not 0.0 < r <= 0.5:
        raise ConfigError("r must be in (0, 0.5]")
    best_p = 1.0
    rate = r**2 / (2.0 * ((1.0 - r) ** 2 + r**2))
    return rate, best_p


def qber_sampling_sigma(q: float, n_bits: int) -> float:
    """Binomial standard error of a rate estimated from n_bits samples."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    return math.sqrt(q * (1.0 - q) / n_bits)


def real_vs_estimated(
    delta_a: BitString, delta_b: BitString, n: int
) -> tuple[float, float, float]:
    """Full-string error rate vs the fragment estimate and their gap."""
    if len(delta_a) != len(delta_b):
        raise ValueError("sifted strings must have equal length")
    if not 1 <= n <= len(delta_a):
        raise ValueError("fragment length out of range")
    qber_full = hamming_fraction(delta_a, delta_b)
    qber_fragment = hamming_fraction(delta_a[:n], delta_b[:n])
    return qber_full, qber_fragment, abs(qber_fragment - qber_full)


@dataclass(frozen=True)
class SweepPoint:
    """One loss point of a sweep: link loss plus per-point session settings."""

    losses_db: float
    target_sifted_len: int
    iterations: int

    @property
    def distance_km(self) -> float:
        return self.losses_db / 0.21


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    losses_db: float
    l_delta: int
    iterations: int
    time_s_per_bit: float
    qber_mean: float
    qber_sigma: float


CSV_COLUMNS = ("distance_km", "losses_db", "L_delta", "iterations",
               "time_s_per_bit", "qber_mean", "qber_sigma")


def build_sweep(
    points: Sequence[SweepPoint],
    base_cfg: ProtocolConfig,
    secret: bytes,
    seed: int = 0,
    round_hook=None,
) -> List[SweepRow]:
    """Run one honest session per loss point.

    Link loss is realized as fiber length at the configured dB/km, so the
    distance column and the loss column stay convertible both ways. Every
    point gets an independent seed stream offset.
    """
    rows: List[SweepRow] = []
    for idx, point in enumerate(points):
        alpha = base_cfg.channel.alpha_db_per_km
        channel = ChannelModel(
            alpha_db_per_km=alpha,
            length_km=point.losses_db / alpha if alpha > 0 else 0.0,
            extra_loss_db=base_cfg.channel.extra_loss_db,
            rx_loss_db=base_cfg.channel.rx_loss_db,
        )
        cfg = ProtocolConfig(
            m=base_cfg.m,
            target_sifted_len=point.target_sifted_len,
            fragment_fraction=base_cfg.fragment_fraction,
            t_v=base_cfg.t_v,
            iterations=point.iterations,
            rep_rate_hz=base_cfg.rep_rate_hz,
            max_blocks_per_round=base_cfg.max_blocks_per_round,
            verifier_id=base_cfg.verifier_id,
            prover_id=base_cfg.prover_id,
            t0_base_ms=base_cfg.t0_base_ms,
            channel=channel,
            detector=base_cfg.detector,
            intensity=base_cfg.intensity,
        )
        stats = run_session(cfg, secret, seed=seed + 1000 * idx, round_hook=round_hook)
        time_per_bit = float(
            sum(r.elapsed_model_s / r.sifted_len for r in stats.rounds
                if r.violation is None)
            / max(1, sum(1 for r in stats.rounds if r.violation is None))
        )
        rows.append(SweepRow(
            distance_km=channel.length_km,
            losses_db=point.losses_db,
            l_delta=point.target_sifted_len,
            iterations=point.iterations,
            time_s_per_bit=time_per_bit,
            qber_mean=stats.mean_qber,
            qber_sigma=stats.sigma_qber,
        ))
    return rows


def _format_value(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def sweep_to_csv(rows: Sequence[SweepRow], stream: Optional[io.TextIOBase] = None) -> str:
    """Serialize rows, one per line, header matching the reference schema."""
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            _format_value(row.distance_km),
            _format_value(row.losses_db),
            row.l_delta,
            row.iterations,
            _format_value(row.time_s_per_bit),
            _format_value(row.qber_mean),
            _format_value(row.qber_sigma),
        ])
    return buf.getvalue() if stream is None else ""


def sweep_to_markdown(rows: Sequence[SweepRow]) -> str:
    lines = ["| " + " | ".join(CSV_COLUMNS) + " |",
             "|" + "---|" * len(CSV_COLUMNS)]
    for row in rows:
        lines.append("| " + " | ".join([
            _format_value(row.distance_km),
            _format_value(row.losses_db),
            str(row.l_delta),
            str(row.iterations),
            _format_value(row.time_s_per_bit),
            _format_value(row.qber_mean),
            _format_value(row.qber_sigma),
        ]) + " |")
    return "\n".join(lines) + "\n"
