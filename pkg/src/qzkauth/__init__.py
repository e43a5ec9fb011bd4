"""Interactive zero-knowledge authentication over a simulated BB84-style link.

A verifier and a prover holding a pre-shared secret derive a basis schedule
and a one-time-pad mask from it, exchange weak polarized pulses over a lossy
simulated channel, sift on detection instants only, and compare a masked
fragment; the proof passes iff the estimated error rate stays below the
verification threshold.
"""

from .adversary import (
    ProverStrategy,
    StrategyKind,
    VerifierStrategy,
    otp_guess_success_prob,
)
from .analysis import (
    QberTheoryInputs,
    SweepPoint,
    SweepRow,
    build_sweep,
    optimal_attack_qber,
    qber_sampling_sigma,
    real_vs_estimated,
    theoretical_qber,
)
from .calibration import CalibrationResult, calibrate_dark_prob
from .config import RunConfig, load_config, load_preset
from .core import BitString, RngStream, hamming_fraction, xor
from .kdf import DerivedKeys, Prk, SecretMaterial, derive_session_keys, expand, extract
from .photonics import (
    Basis,
    ChannelModel,
    DetectionEvent,
    DetectorModel,
    EmittedSymbol,
    Intensity,
    IntensityPlan,
    Outcome,
    expected_time_per_sifted_bit,
    misalignment_error,
    simulate_slot,
    transmittance,
)
from .protocol import (
    ProtocolConfig,
    RoundCapture,
    RoundResult,
    SessionStats,
    run_round,
    run_session,
    verdict,
)
from .transport import Transcript, transcript_audit

__version__ = "0.1.0"
