"""Stochastic model of the quantum stage.

Weak-pulse emission with signal/decoy/vacuum intensities, fiber and receiver
loss, finite polarization extinction ratio, detector efficiency and per-gate
dark counts. Sampling is vectorized over a block of pulse slots; the
single-slot entry point wraps the same code path with size-1 arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RngStream

__all__ = [
    "Basis",
    "Intensity",
    "Outcome",
    "ChannelModel",
    "DetectorModel",
    "IntensityPlan",
    "EmittedSymbol",
    "DetectionEvent",
    "SymbolBlock",
    "EventBlock",
    "transmittance",
    "misalignment_error",
    "slot_outcome_probs",
    "simulate_block",
    "simulate_slot",
    "expected_time_per_sifted_bit",
]


class Basis(enum.IntEnum):
    Z = 0
    X = 1


class Intensity(enum.IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


class Outcome(enum.IntEnum):
    NO_CLICK = 0
    SINGLE = 1
    DOUBLE = 2


@dataclass(frozen=True)
class ChannelModel:
    """Link budget in dB: fiber attenuation, inserted loss, receiver loss."""

    alpha_db_per_km: float = 0.21
    length_km: float = 0.0
    extra_loss_db: float = 0.0
    rx_loss_db: float = 5.0

    def __post_init__(self):
        for name in ("alpha_db_per_km", "length_km", "extra_loss_db", "rx_loss_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total_loss_db(self) -> float:
        return self.alpha_db_per_km * self.length_km + self.extra_loss_db + self.rx_loss_db


@dataclass(frozen=True)
class DetectorModel:
    """Two gated single-photon detectors behind a polarizing splitter."""

    efficiency: float = 0.20
    dark_prob: float = 0.0
    extinction_ratio_db: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError("dark_prob must be in [0, 1)")
        if self.extinction_ratio_db < 0:
            raise ValueError("extinction_ratio_db must be >= 0")


@dataclass(frozen=True)
class IntensityPlan:
    """Mean photon numbers and occurrence probabilities of the pulse classes."""

    mu: float = 0.5
    nu: float = 0.1
    p_mu: float = 0.7
    p_nu: float = 0.2
    p_0: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.nu < self.mu:
            raise ValueError("need 0 < nu < mu")
        if min(self.p_mu, self.p_nu, self.p_0) < 0:
            raise ValueError("class probabilities must be >= 0")
        if not math.isclose(self.p_mu + self.p_nu + self.p_0, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("class probabilities must sum to 1")

    def mean_photons(self, intensity: int) -> float:
        return (self.mu, self.nu, 0.0)[intensity]


@dataclass(frozen=True)
class EmittedSymbol:
    slot: int
    basis: Basis
    bit: int
    intensity: Intensity


@dataclass(frozen=True)
class DetectionEvent:
    slot: int
    outcome: Outcome
    bit: Optional[int]  # set iff outcome is SINGLE
    measured_basis: Basis


class SymbolBlock:
    """Column-wise block of emitted symbols (one entry per pulse slot)."""

    __slots__ = ("base_slot", "bases", "bits", "intensities")

    def __init__(self, base_slot: int, bases: np.ndarray, bits: np.ndarray,
                 intensities: np.ndarray):
        if not (len(bases) == len(bits) == len(intensities)):
            raise ValueError("column lengths differ")
        self.base_slot = base_slot
        self.bases = np.asarray(bases, dtype=np.uint8)
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.intensities = np.asarray(intensities, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.bases)

    def symbol(self, i: int) -> EmittedSymbol:
        return EmittedSymbol(
            slot=self.base_slot + i,
            basis=Basis(int(self.bases[i])),
            bit=int(self.bits[i]),
            intensity=Intensity(int(self.intensities[i])),
        )


class EventBlock:
    """Column-wise detection outcomes aligned with a SymbolBlock."""

    __slots__ = ("base_slot", "outcomes", "bits", "measured_bases")

    def __init__(self, base_slot: int, outcomes: np.ndarray, bits: np.ndarray,
                 measured_bases: np.ndarray):
        self.base_slot = base_slot
        self.outcomes = outcomes
        self.bits = bits
        self.measured_bases = measured_bases

    def __len__(self) -> int:
        return len(self.outcomes)

    def single_slots(self) -> np.ndarray:
        """Global slot indices with exactly one detector click, ascending."""
        return self.base_slot + np.flatnonzero(self.outcomes == Outcome.SINGLE)

    def event(self, i: int) -> DetectionEvent:
        out = Outcome(int(self.outcomes[i]))
        return DetectionEvent(
            slot=self.base_slot + i,
            outcome=out,
            bit=int(self.bits[i]) if out == Outcome.SINGLE else None,
            measured_basis=Basis(int(self.measured_bases[i])),
        )


def transmittance(ch: ChannelModel) -> float:
    """End-to-end photon survival probability, 10^(-total_dB/10)."""
    return 10.0 ** (-ch.total_loss_db / 10.0)


def misalignment_error(er_db: float) -> float:
    """Wrong-detector click probability under matched bases for a given ER."""
    if er_db < 0:
        raise ValueError("er_db must be >= 0")
    if math.isinf(er_db):
        return 0.0
    return 1.0 / (1.0 + 10.0 ** (er_db / 10.0))


def _click_probs(plan: IntensityPlan, ch: ChannelModel, det: DetectorModel) -> np.ndarray:
    eta = transmittance(ch)
    mus = np.array([plan.mu, plan.nu, 0.0])
    return 1.0 - np.exp(-mus * eta * det.efficiency)


def simulate_block(
    block: SymbolBlock,
    bob_bases: np.ndarray,
    plan: IntensityPlan,
    ch: ChannelModel,
    det: DetectorModel,
    rng: RngStream,
) -> EventBlock:
    """Sample detection outcomes for every slot of a block.

    Per slot: a transmitted-photon click fires with 1 - exp(-mu_eff*eta*eff);
    if it fires it lands on the wrong detector with probability e_pol when the
    measurement basis matches the preparation, else on either detector with
    probability 1/2. Each detector additionally dark-clicks with dark_prob.
    Two firing detectors give DOUBLE, none NO_CLICK, exactly one SINGLE with
    that detector's bit.
    """
    n = len(block)
    bob_bases = np.asarray(bob_bases, dtype=np.uint8)
    if bob_bases.shape != (n,):
        raise ValueError("one measurement basis per slot required")
    g = rng.gen

    p_click = _click_probs(plan, ch, det)[block.intensities]
    signal = g.random(n) < p_click

    match = bob_bases == block.bases
    p_wrong = np.where(match, misalignment_error(det.extinction_ratio_db), 0.5)
    wrong = g.random(n) < p_wrong
    routed_bit = block.bits ^ wrong  # detector index the photon lands on

    dark = g.random((n, 2)) < det.dark_prob
    fired0 = (signal & (routed_bit == 0)) | dark[:, 0]
    fired1 = (signal & (routed_bit == 1)) | dark[:, 1]

    n_fired = fired0.astype(np.uint8) + fired1.astype(np.uint8)
    outcomes = np.where(n_fired == 1, Outcome.SINGLE, 0).astype(np.uint8)
    outcomes[n_fired == 2] = Outcome.DOUBLE
    bits = fired1.astype(np.uint8)  # meaningful only where SINGLE
    return EventBlock(block.base_slot, outcomes, bits, bob_bases)


def simulate_slot(
    sym: EmittedSymbol,
    bob_basis: Basis,
    plan: IntensityPlan,
    ch: ChannelModel,
    det: DetectorModel,
    rng: RngStream,
) -> DetectionEvent:
    """Single-slot sampler; same probability model as simulate_block."""
    block = SymbolBlock(
        sym.slot,
        np.array([sym.basis], dtype=np.uint8),
        np.array([sym.bit], dtype=np.uint8),
        np.array([sym.intensity], dtype=np.uint8),
    )
    events = simulate_block(block, np.array([bob_basis], dtype=np.uint8), plan, ch, det, rng)
    return events.event(0)


def slot_outcome_probs(
    mu_eff: float,
    ch: ChannelModel,
    det: DetectorModel,
    bases_match: bool,
) -> tuple[float, float, float, float]:
    """Exact per-slot outcome probabilities.

    Returns (p_no_click, p_single_correct, p_single_wrong, p_double); the four
    sum to 1. "Correct" means the single click reports the transmitted bit.
    """
    eta = transmittance(ch)
    p_sig = 1.0 - math.exp(-mu_eff * eta * det.efficiency)
    d = det.dark_prob
    w = misalignment_error(det.extinction_ratio_db) if bases_match else 0.5

    p_no = (1.0 - p_sig) * (1.0 - d) ** 2
    p_double = p_sig * d + (1.0 - p_sig) * d * d
    p_single_wrong = p_sig * w * (1.0 - d) + (1.0 - p_sig) * d * (1.0 - d)
    p_single_correct = p_sig * (1.0 - w) * (1.0 - d) + (1.0 - p_sig) * d * (1.0 - d)
    return p_no, p_single_correct, p_single_wrong, p_double


def expected_time_per_sifted_bit(
    plan: IntensityPlan,
    ch: ChannelModel,
    det: DetectorModel,
    rep_rate_hz: float,
) -> float:
    """Expected seconds to gather one sifted bit.

    Sifted bits are single clicks on signal-intensity pulses, so the rate is
    rep_rate * p_mu * P(single | signal pulse), dark counts included.
    """
    if rep_rate_hz <= 0:
        raise ValueError("rep_rate_hz must be > 0")
    p_no, p_ok, p_wrong, p_double = slot_outcome_probs(plan.mu, ch, det, bases_match=True)
    p_single = p_ok + p_wrong
    if p_single <= 0.0:
        return math.inf
    return 1.0 / (rep_rate_hz * plan.p_mu * p_single)
