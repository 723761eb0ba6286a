import json
from dataclasses import replace

import pytest

from src.config import (CONFIG_KEYS, ExperimentConfig, config_from_dict, effective_e_w_values, load_config,
                        save_config, validate_config)
from src.errors import ConfigError


def test_defaults_are_valid():
    config = validate_config(ExperimentConfig())
    assert config.v_values == [20, 50, 100, 150, 200, 300]
    assert config.seeds == list(range(10))


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        config_from_dict({"colour": "blue"})


def test_nested_values_are_rejected():
    with pytest.raises(ConfigError, match="flat"):
        config_from_dict({"schedule": {"start": 0}})


def test_save_and_load_round_trip(tmp_path, tiny_config):
    path = tmp_path / "configs" / "tiny.json"
    save_config(tiny_config, str(path))
    with open(path) as f:
        data = json.load(f)
    assert sorted(data) == sorted(CONFIG_KEYS)
    assert load_config(str(path)) == tiny_config


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(str(tmp_path / "missing.json"))


def test_load_rejects_non_objects(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(str(path))
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))


@pytest.mark.parametrize("changes, message", [
    ({"v_values": [1]}, "V must be a number >= 2"),
    ({"v_values": []}, "v_values"),
    ({"controllers": ["rhc"]}, "controllers"),
    ({"horizon": 0}, "horizon"),
    ({"seeds": [-1]}, "seeds"),
    ({"e_w_values": [2.5]}, "e_w"),
    ({"error_curve": [0.1]}, "w\\+1=5"),
    ({"detection_norm": "l2"}, "detection_norm"),
    ({"theta_mode": "fancy"}, "theta_mode"),
    ({"workers": 0}, "workers"),
    ({"export_traces": "yes"}, "export_traces"),
])
def test_validation_messages(tiny_config, changes, message):
    with pytest.raises(ConfigError, match=message):
        validate_config(replace(tiny_config, **changes))


def test_bad_schedule(tiny_config):
    with pytest.raises(ConfigError, match="schedule"):
        validate_config(replace(tiny_config, schedule="0:0.3"))
    with pytest.raises(ConfigError):
        validate_config(replace(tiny_config, schedule="0:1.5:0.3"))


def test_error_curve_replaces_e_w_sweep(tiny_config):
    config = replace(tiny_config, error_curve=[0.0, 0.02, 0.04, 0.06, 0.08])
    validate_config(config)
    assert effective_e_w_values(config) == [pytest.approx(0.04)]
    assert effective_e_w_values(tiny_config) == [0.0]
