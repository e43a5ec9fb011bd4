"""Detector calibration: find the dark-count probability reproducing a
measured error floor.

The honest matched-bases error rate rises monotonically with the per-gate
dark probability (same uniform draws, higher threshold), so a bisection on
simulated sessions converges; running every probe with one seed keeps the
empirical rate an exactly monotone function of the knob.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import List

from .errors import CalibrationError
from .photonics import DetectorModel, slot_outcome_probs
from .protocol import ProtocolConfig, RoundCapture, run_session
from .core import hamming_fraction

__all__ = ["CalibrationResult", "expected_honest_qber", "calibrate_dark_prob"]

_DARK_MAX = 0.4


@dataclass(frozen=True)
class CalibrationResult:
    dark_prob: float
    achieved_qber: float
    rounds: int
    iterations: int


def expected_honest_qber(cfg: ProtocolConfig) -> float:
    """Closed-form error rate of honest matched-bases signal detections."""
    p_no, p_ok, p_wrong, p_double = slot_outcome_probs(
        cfg.intensity.mu, cfg.channel, cfg.detector, bases_match=True
    )
    return p_wrong / (p_ok + p_wrong)


def _with_dark(cfg: ProtocolConfig, dark: float) -> ProtocolConfig:
    det = dataclasses.replace(cfg.detector, dark_prob=dark)
    return dataclasses.replace(cfg, detector=det)


def _simulated_qber(cfg: ProtocolConfig, secret: bytes, seed: int, rounds: int) -> float:
    probe = dataclasses.replace(cfg, iterations=rounds)
    captures: List[RoundCapture] = []
    run_session(probe, secret, seed=seed, captures=captures)
    total = sum(hamming_fraction(c.delta_a, c.delta_b) for c in captures)
    return total / len(captures)


def calibrate_dark_prob(
    cfg: ProtocolConfig,
    target_floor: float,
    secret: bytes = b"calibration secret",
    seed: int = 0,
    rounds: int = 50,
    tolerance: float = 1e-3,
    max_iterations: int = 40,
) -> CalibrationResult:
    """Bisect the dark probability until the simulated honest mean error
    rate lands within ``tolerance`` of ``target_floor``.

    The extinction ratio stays fixed; its misalignment error lower-bounds
    the reachable floor, and saturated dark counts upper-bound it. Targets
    outside that range raise with the achievable interval in the message.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    low, high = 0.0, _DARK_MAX
    floor = expected_honest_qber(_with_dark(cfg, low))
    ceiling = expected_honest_qber(_with_dark(cfg, high))
    if not floor + tolerance <= target_floor <= ceiling - tolerance:
        raise CalibrationError(
            f"target {target_floor:.4f} outside achievable range "
            f"[{floor:.4f}, {ceiling:.4f}] at ER "
            f"{cfg.detector.extinction_ratio_db} dB"
        )

    dark = 0.5 * (low + high)
    achieved = float("nan")
    for iteration in range(1, max_iterations + 1):
        dark = 0.5 * (low + high)
        achieved = _simulated_qber(_with_dark(cfg, dark), secret, seed, rounds)
        if abs(achieved - target_floor) <= tolerance:
            return CalibrationResult(dark, achieved, rounds, iteration)
        if achieved < target_floor:
            low = dark
        else:
            high = dark
    raise CalibrationError(
        f"no convergence after {max_iterations} bisection steps "
        f"(last {achieved:.4f} at dark {dark:.2e})"
    )
