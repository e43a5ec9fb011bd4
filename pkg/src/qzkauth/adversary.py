"""Dishonest-party strategies.

A basis-blind prover measures in random bases because he cannot reconstruct
the basis schedule; that is the component of cheating the error rate detects,
and it raises the noiseless error rate to 25%. (A party that also lacks the
session mask scores ~50%: the decrypted fragment is then uniform noise.
Both lose; the 25% figure is the attacker's best case.) The symmetric
verifier strategy prepares states in random bases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import BitString, RngStream
from .errors import ConfigError
from .photonics import Basis

__all__ = [
    "StrategyKind",
    "ProverStrategy",
    "VerifierStrategy",
    "prover_basis",
    "prover_bases_block",
    "verifier_bases_block",
    "otp_guess_success_prob",
    "otp_guess_log2_prob",
]


class StrategyKind(enum.Enum):
    HONEST = "honest"
    RANDOM_BASIS = "random-basis"


@dataclass(frozen=True)
class ProverStrategy:
    kind: StrategyKind = StrategyKind.HONEST
    p_b_z: float = 0.5  # Z-basis probability under RANDOM_BASIS

    def __post_init__(self):
        if not 0.0 <= self.p_b_z <= 1.0:
            raise ConfigError("p_b_z must be in [0, 1]")


@dataclass(frozen=True)
class VerifierStrategy:
    kind: StrategyKind = StrategyKind.HONEST
    p_a_z: float = 0.5  # Z-basis probability under RANDOM_BASIS (guessing)

    def __post_init__(self):
        if not 0.0 <= self.p_a_z <= 1.0:
            raise ConfigError("p_a_z must be in [0, 1]")


def prover_bases_block(
    strategy: ProverStrategy,
    schedule_block: Optional[BitString],
    n_slots: int,
    rng: RngStream,
) -> np.ndarray:
    """Measurement bases for one block, one uint8 (0=Z, 1=X) per slot."""
    if strategy.kind == StrategyKind.HONEST:
        if schedule_block is None:
            raise ConfigError("honest prover requires derived basis schedule")
        if len(schedule_block) < n_slots:
            raise ConfigError("schedule block shorter than pulse block")
        return schedule_block.bits[:n_slots].copy()
    return (rng.uniform(n_slots) >= strategy.p_b_z).astype(np.uint8)


def prover_basis(
    strategy: ProverStrategy,
    slot: int,
    schedule: Optional[BitString],
    rng: RngStream,
) -> Basis:
    """Single-slot basis choice: honest follows the schedule bit, random draws."""
    if strategy.kind == StrategyKind.HONEST:
        if schedule is None:
            raise ConfigError("honest prover requires derived basis schedule")
        return Basis(schedule[slot])
    return Basis(int(rng.uniform(1)[0] >= strategy.p_b_z))


def verifier_bases_block(
    strategy: VerifierStrategy,
    schedule_block: BitString,
    rng: RngStream,
) -> np.ndarray:
    """Preparation bases: honest follows the schedule, guessing draws random."""
    if strategy.kind == StrategyKind.HONEST:
        return schedule_block.bits.copy()
    return (rng.uniform(len(schedule_block)) >= strategy.p_a_z).astype(np.uint8)


def otp_guess_success_prob(n: int) -> Fraction:
    """Exact probability 2^-n of guessing every bit of an n-bit pad."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Fraction(1, 2**n)


def otp_guess_log2_prob(n: int) -> float:
    """log2 of the guessing probability, i.e. -n; usable when 2^-n underflows."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return -float(n)
