"""Declarative run configuration.

YAML documents with sections protocol/channel/detector/intensity/run and
optional sweep/check blocks. Every key is schema-checked before a run;
unknown keys are rejected so typos cannot silently fall back to defaults.
Presets shipping with the package encode the reference parameter settings.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional

import yaml

from .adversary import ProverStrategy, StrategyKind, VerifierStrategy
from .analysis import SweepPoint
from .errors import ConfigError
from .photonics import ChannelModel, DetectorModel, IntensityPlan
from .protocol import ProtocolConfig

__all__ = [
    "CheckBands",
    "RunConfig",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "dump_config",
    "load_preset",
    "preset_names",
    "apply_noiseless",
    "CONFIG_DIR_ENV",
]

CONFIG_DIR_ENV = "QZKAUTH_CONFIG_DIR"

PRESETS = ("honest-b2b", "dishonest-b2b", "table1-sweep")


@dataclass(frozen=True)
class CheckBands:
    """Expected-outcome bands enforced by the CLI --check flag."""

    qber_mean_min: Optional[float] = None
    qber_mean_max: Optional[float] = None
    qber_sigma_min: Optional[float] = None
    qber_sigma_max: Optional[float] = None
    expect: Optional[str] = None  # "accept-all" | "reject-all"
    sweep_qber_max: Optional[float] = None

    def __post_init__(self):
        if self.expect not in (None, "accept-all", "reject-all"):
            raise ConfigError(f"unknown expectation {self.expect!r}")


@dataclass(frozen=True)
class RunConfig:
    protocol: ProtocolConfig
    seed: int = 0
    secret: bytes = b"pre-shared secret"
    prover_secret: Optional[bytes] = None  # None: same as secret
    prover_strategy: ProverStrategy = ProverStrategy()
    verifier_strategy: VerifierStrategy = VerifierStrategy()
    sweep: Optional[List[SweepPoint]] = None
    check: Optional[CheckBands] = None

    @property
    def effective_prover_secret(self) -> bytes:
        return self.secret if self.prover_secret is None else self.prover_secret


def _take(section: dict, known: dict, where: str) -> dict:
    """Pop known keys with type coercion; reject anything left over."""
    out = {}
    for key, conv in known.items():
        if key in section:
            raw = section.pop(key)
            try:
                out[key] = conv(raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{where}.{key}: {e}") from None
    if section:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(section))}")
    return out


def _as_bytes(v) -> bytes:
    if isinstance(v, bytes):
        return v
    if isinstance(v, str):
        return v.encode("utf-8")
    raise TypeError(f"expected string, got {type(v).__name__}")


def _as_float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise TypeError(f"expected number, got {type(v).__name__}")
    return float(v)


def _as_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"expected integer, got {type(v).__name__}")
    return v


def _strategy_kind(v) -> StrategyKind:
    try:
        return StrategyKind(str(v))
    except ValueError:
        raise ValueError(f"unknown strategy {v!r}; use honest or random-basis") from None


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a mapping")
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}

    proto_kw = _take(doc.pop("protocol", {}) or {}, {
        "m": _as_int,
        "target_sifted_len": _as_int,
        "fragment_fraction": _as_float,
        "verification_threshold": _as_float,
        "iterations": _as_int,
        "rep_rate_hz": _as_float,
        "max_blocks_per_round": _as_int,
        "verifier_id": _as_bytes,
        "prover_id": _as_bytes,
        "t0_base_ms": _as_int,
    }, "protocol")
    if "verification_threshold" in proto_kw:
        proto_kw["t_v"] = proto_kw.pop("verification_threshold")

    channel_kw = _take(doc.pop("channel", {}) or {}, {
        "alpha_db_per_km": _as_float,
        "length_km": _as_float,
        "extra_loss_db": _as_float,
        "rx_loss_db": _as_float,
    }, "channel")
    detector_kw = _take(doc.pop("detector", {}) or {}, {
        "efficiency": _as_float,
        "dark_prob": _as_float,
        "extinction_ratio_db": _as_float,
    }, "detector")
    intensity_kw = _take(doc.pop("intensity", {}) or {}, {
        "mu": _as_float,
        "nu": _as_float,
        "p_mu": _as_float,
        "p_nu": _as_float,
        "p_0": _as_float,
    }, "intensity")

    run_kw = _take(doc.pop("run", {}) or {}, {
        "seed": _as_int,
        "secret": _as_bytes,
        "prover_secret": _as_bytes,
        "strategy": _strategy_kind,
        "p_b_z": _as_float,
        "verifier_strategy": _strategy_kind,
        "p_a_z": _as_float,
    }, "run")

    sweep_doc = doc.pop("sweep", None)
    check_doc = doc.pop("check", None)
    if doc:
        raise ConfigError(f"unknown top-level section(s): {', '.join(sorted(doc))}")

    try:
        protocol = ProtocolConfig(
            channel=ChannelModel(**channel_kw),
            detector=DetectorModel(**detector_kw),
            intensity=IntensityPlan(**intensity_kw),
            **proto_kw,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None

    sweep = None
    if sweep_doc is not None:
        if not isinstance(sweep_doc, list) or not sweep_doc:
            raise ConfigError("sweep must be a nonempty list of points")
        sweep = []
        for i, item in enumerate(sweep_doc):
            kw = _take(dict(item), {
                "losses_db": _as_float,
                "target_sifted_len": _as_int,
                "iterations": _as_int,
            }, f"sweep[{i}]")
            missing = {"losses_db", "target_sifted_len", "iterations"} - set(kw)
            if missing:
                raise ConfigError(f"sweep[{i}] missing {', '.join(sorted(missing))}")
            sweep.append(SweepPoint(**kw))

    check = None
    if check_doc is not None:
        kw = _take(dict(check_doc), {
            "qber_mean_min": _as_float,
            "qber_mean_max": _as_float,
            "qber_sigma_min": _as_float,
            "qber_sigma_max": _as_float,
            "expect": str,
            "sweep_qber_max": _as_float,
        }, "check")
        check = CheckBands(**kw)

    prover_strategy = ProverStrategy(
        kind=run_kw.get("strategy", StrategyKind.HONEST),
        p_b_z=run_kw.get("p_b_z", 0.5),
    )
    verifier_strategy = VerifierStrategy(
        kind=run_kw.get("verifier_strategy", StrategyKind.HONEST),
        p_a_z=run_kw.get("p_a_z", 0.5),
    )
    return RunConfig(
        protocol=protocol,
        seed=run_kw.get("seed", 0),
        secret=run_kw.get("secret", b"pre-shared secret"),
        prover_secret=run_kw.get("prover_secret"),
        prover_strategy=prover_strategy,
        verifier_strategy=verifier_strategy,
        sweep=sweep,
        check=check,
    )


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML config; honors the config-dir env variable."""
    p = Path(path)
    if not p.exists():
        env_dir = os.environ.get(CONFIG_DIR_ENV)
        if env_dir and not p.is_absolute():
            candidate = Path(env_dir) / p
            if candidate.exists():
                p = candidate
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {p}: {e}") from None
    return config_from_dict(doc or {})


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    ref = resources.files("qzkauth").joinpath(f"presets/{name}.yaml")
    return config_from_dict(yaml.safe_load(ref.read_text()))


def preset_names() -> tuple:
    return PRESETS


def config_to_dict(cfg: RunConfig) -> dict:
    p = cfg.protocol
    doc = {
        "protocol": {
            "m": p.m,
            "target_sifted_len": p.target_sifted_len,
            "fragment_fraction": p.fragment_fraction,
            "verification_threshold": p.t_v,
            "iterations": p.iterations,
            "rep_rate_hz": p.rep_rate_hz,
            "max_blocks_per_round": p.max_blocks_per_round,
            "verifier_id": p.verifier_id.decode("utf-8"),
            "prover_id": p.prover_id.decode("utf-8"),
            "t0_base_ms": p.t0_base_ms,
        },
        "channel": dataclasses.asdict(p.channel),
        "detector": dataclasses.asdict(p.detector),
        "intensity": dataclasses.asdict(p.intensity),
        "run": {
            "seed": cfg.seed,
            "secret": cfg.secret.decode("utf-8"),
            "strategy": cfg.prover_strategy.kind.value,
            "p_b_z": cfg.prover_strategy.p_b_z,
        },
    }
    if cfg.prover_secret is not None:
        doc["run"]["prover_secret"] = cfg.prover_secret.decode("utf-8")
    if cfg.verifier_strategy.kind != StrategyKind.HONEST:
        doc["run"]["verifier_strategy"] = cfg.verifier_strategy.kind.value
        doc["run"]["p_a_z"] = cfg.verifier_strategy.p_a_z
    if cfg.sweep:
        doc["sweep"] = [
            {"losses_db": s.losses_db, "target_sifted_len": s.target_sifted_len,
             "iterations": s.iterations}
            for s in cfg.sweep
        ]
    if cfg.check:
        check = {k: v for k, v in dataclasses.asdict(cfg.check).items() if v is not None}
        if check:
            doc["check"] = check
    return doc


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def apply_noiseless(cfg: RunConfig) -> RunConfig:
    """Ideal channel and detectors: unit transmission, no dark counts,
    perfect extinction."""
    protocol = dataclasses.replace(
        cfg.protocol,
        channel=ChannelModel(alpha_db_per_km=0.0, length_km=0.0,
                             extra_loss_db=0.0, rx_loss_db=0.0),
        detector=DetectorModel(efficiency=1.0, dark_prob=0.0,
                               extinction_ratio_db=math.inf),
    )
    return dataclasses.replace(cfg, protocol=protocol)
