import math

import pytest
import yaml

from qzkauth.adversary import StrategyKind
from qzkauth.config import (
    apply_noiseless,
    config_from_dict,
    dump_config,
    load_config,
    load_preset,
    preset_names,
)
from qzkauth.errors import ConfigError

MINIMAL = {
    "protocol": {"m": 256, "target_sifted_len": 128, "iterations": 2},
    "detector": {"efficiency": 0.5, "dark_prob": 0.001},
    "run": {"seed": 9, "secret": "hunter2", "strategy": "random-basis", "p_b_z": 0.25},
}


def test_minimal_config_parses_with_defaults():
    cfg = config_from_dict(dict(MINIMAL))
    assert cfg.protocol.m == 256
    assert cfg.protocol.t_v == 0.11
    assert cfg.protocol.channel.rx_loss_db == 5.0
    assert cfg.seed == 9
    assert cfg.secret == b"hunter2"
    assert cfg.prover_strategy.kind == StrategyKind.RANDOM_BASIS
    assert cfg.prover_strategy.p_b_z == 0.25
    assert cfg.effective_prover_secret == b"hunter2"


def test_unknown_keys_rejected():
    bad = dict(MINIMAL)
    bad["typo_section"] = {}
    with pytest.raises(ConfigError, match="typo_section"):
        config_from_dict(bad)
    bad = {"protocol": {"m": 256, "target_sifted_len": 128, "colour": 3}}
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict(bad)
    with pytest.raises(ConfigError, match="sweep"):
        config_from_dict({"sweep": [{"losses_db": 1.0}]})


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"protocol": {"iterations": "many"}})
    with pytest.raises(ConfigError):
        config_from_dict({"protocol": {"fragment_fraction": 1.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"run": {"strategy": "clever"}})
    with pytest.raises(ConfigError):
        config_from_dict({"check": {"expect": "maybe"}})
    with pytest.raises(ConfigError):
        config_from_dict([1, 2, 3])


def test_presets_load_and_validate():
    for name in preset_names():
        cfg = load_preset(name)
        assert cfg.protocol.t_v == 0.11
    honest = load_preset("honest-b2b")
    assert honest.protocol.iterations == 173
    assert honest.check.expect == "accept-all"
    dishonest = load_preset("dishonest-b2b")
    assert dishonest.prover_strategy.kind == StrategyKind.RANDOM_BASIS
    sweep = load_preset("table1-sweep")
    assert len(sweep.sweep) == 15
    assert sweep.sweep[-1].losses_db == 12.73
    with pytest.raises(ConfigError):
        load_preset("no-such-preset")


def test_dump_round_trip():
    cfg = load_preset("table1-sweep")
    text = dump_config(cfg)
    again = config_from_dict(yaml.safe_load(text))
    assert again.protocol == cfg.protocol
    assert again.sweep == cfg.sweep
    assert again.check == cfg.check
    assert again.secret == cfg.secret


def test_noiseless_override():
    cfg = apply_noiseless(load_preset("honest-b2b"))
    assert cfg.protocol.channel.rx_loss_db == 0.0
    assert cfg.protocol.detector.dark_prob == 0.0
    assert math.isinf(cfg.protocol.detector.extinction_ratio_db)


def test_load_config_env_dir(tmp_path, monkeypatch):
    target = tmp_path / "mine.yaml"
    target.write_text(yaml.safe_dump(MINIMAL))
    monkeypatch.setenv("QZKAUTH_CONFIG_DIR", str(tmp_path))
    cfg = load_config("mine.yaml")
    assert cfg.protocol.m == 256
    monkeypatch.delenv("QZKAUTH_CONFIG_DIR")
    with pytest.raises(ConfigError):
        load_config("mine.yaml")


def test_load_config_reports_yaml_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("protocol: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad)
