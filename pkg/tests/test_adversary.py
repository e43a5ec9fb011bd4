import math
from fractions import Fraction

import numpy as np
import pytest

from qzkauth.adversary import (
    ProverStrategy,
    StrategyKind,
    VerifierStrategy,
    otp_guess_log2_prob,
    otp_guess_success_prob,
    prover_bases_block,
    prover_basis,
)
from qzkauth.core import BitString, RngStream, xor
from qzkauth.errors import ConfigError
from qzkauth.photonics import Basis

HONEST = ProverStrategy()


def test_honest_prover_follows_schedule():
    schedule = BitString.from_str("0110")
    rng = RngStream(1)
    assert prover_basis(HONEST, 1, schedule, rng) == Basis.X
    assert prover_basis(HONEST, 0, schedule, rng) == Basis.Z
    bases = prover_bases_block(HONEST, schedule, 4, rng)
    assert np.array_equal(bases, schedule.bits)


def test_honest_prover_without_keys_is_config_error():
    with pytest.raises(ConfigError):
        prover_basis(HONEST, 0, None, RngStream(1))
    with pytest.raises(ConfigError):
        prover_bases_block(HONEST, None, 8, RngStream(1))


@pytest.mark.parametrize("p,basis", [(1.0, Basis.Z), (0.0, Basis.X)])
def test_random_basis_extremes(p, basis):
    strategy = ProverStrategy(StrategyKind.RANDOM_BASIS, p)
    rng = RngStream(2)
    bases = prover_bases_block(strategy, None, 1000, rng)
    assert np.all(bases == basis)


def test_random_basis_balance():
    strategy = ProverStrategy(StrategyKind.RANDOM_BASIS, 0.5)
    bases = prover_bases_block(strategy, None, 100_000, RngStream(3))
    z_fraction = np.count_nonzero(bases == Basis.Z) / bases.size
    assert abs(z_fraction - 0.5) <= 3 * 0.5 / math.sqrt(bases.size)


def test_strategy_validation():
    with pytest.raises(ConfigError):
        ProverStrategy(StrategyKind.RANDOM_BASIS, 1.5)
    with pytest.raises(ConfigError):
        VerifierStrategy(StrategyKind.RANDOM_BASIS, -0.1)


def test_otp_guess_probability_values():
    assert otp_guess_success_prob(1) == Fraction(1, 2)
    assert otp_guess_success_prob(307) == Fraction(1, 2**307)
    assert otp_guess_log2_prob(307) == -307.0
    with pytest.raises(ValueError):
        otp_guess_success_prob(0)


def test_otp_guess_probability_brute_force():
    # enumerate every 8-bit guess against one fixed pad: exactly one recovers
    key = BitString.from_str("10110001")
    plaintext = BitString.from_str("01100111")
    ciphertext = xor(plaintext, key)
    successes = 0
    for guess_value in range(256):
        guess = BitString([int(b) for b in f"{guess_value:08b}"])
        if xor(ciphertext, guess) == plaintext:
            successes += 1
    assert Fraction(successes, 256) == otp_guess_success_prob(8)
