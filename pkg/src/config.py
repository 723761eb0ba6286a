import os
import json
import logging
from dataclasses import asdict, dataclass, field, fields

from src.ade import DEFAULT_DETECTION_NORM, DETECTION_NORMS
from src.controller import CONTROLLER_KINDS, THETA_MODES, derive_params, ade_params_for
from src.errors import ConfigError, ParameterError
from src.model import build_two_queue_preset
from src.state_process import parse_two_queue_schedule

logger = logging.getLogger(__name__)

CONFIG_FILE = os.path.join("configs", "experiment.json")
PRESET_BUILDERS = {"two_queue": build_two_queue_preset}
PRESETS = tuple(PRESET_BUILDERS)


@dataclass
class ExperimentConfig:
    """Flat experiment description; every value is a scalar or a list of scalars."""

    scenario: str = "stationary"
    preset: str = "two_queue"
    schedule: str = "0:0.3:0.6"
    horizon: int = 50000
    controllers: list = field(default_factory=lambda: ["plc", "bp"])
    v_values: list = field(default_factory=lambda: [20, 50, 100, 150, 200, 300])
    c: float = 0.5
    w: int = 4
    eps_d: float = 0.1
    delta_sim: float = 0.005
    theta_mode: str = "simulation"
    e_w_values: list = field(default_factory=lambda: [0.0, 0.04])
    error_curve: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: list(range(10)))
    zeta: float = 10.0
    detection_norm: str = DEFAULT_DETECTION_NORM
    dual_iters: int = 10000
    warm_iters: int = 100
    workers: int = 1
    out_dir: str = "results"
    export_traces: bool = False


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def config_from_dict(data):
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must be flat, got a nested object")
    return ExperimentConfig(**data)


def load_config(path=CONFIG_FILE):
    """Read a JSON config and merge it over the defaults.

    Raises:
        ConfigError: the file is unreadable, not a JSON object, or has unknown keys
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.exception(f"[ERROR] Error loading config from {path}")
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    config = config_from_dict(data)
    logger.info(f"[CONFIG] Loaded {config.scenario} config from {path}")
    return config


def save_config(config, path=CONFIG_FILE):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    try:
        with open(path, "w") as f:
            json.dump(asdict(config), f, indent=4, sort_keys=True)
            f.write("\n")
    except OSError as e:
        logger.exception(f"[ERROR] Error saving config to {path}")
        raise ConfigError(f"cannot write config {path}: {e}") from e


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_config(config):
    """Check every parameter against what the simulation modules accept.

    Raises:
        ConfigError: naming the first violated constraint
    """
    _require(isinstance(config.scenario, str) and config.scenario, "scenario must be a non-empty string")
    _require(config.preset in PRESETS, f"preset must be one of {PRESETS}")
    _require(_is_int(config.horizon) and config.horizon >= 1, "horizon must be an integer >= 1")
    parse_two_queue_schedule(config.schedule, config.horizon)

    _require(isinstance(config.controllers, list) and config.controllers, "controllers must be a non-empty list")
    for kind in config.controllers:
        _require(kind in CONTROLLER_KINDS, f"controllers entries must be one of {CONTROLLER_KINDS}, got {kind!r}")
    _require(isinstance(config.v_values, list) and config.v_values, "v_values must be a non-empty list")
    for V in config.v_values:
        _require(_is_number(V) and V >= 2, f"every V must be a number >= 2, got {V!r}")

    _require(_is_number(config.c) and 0 < config.c < 1, "c must lie in (0, 1)")
    _require(_is_int(config.w) and config.w >= 0, "w must be an integer >= 0")
    _require(_is_number(config.eps_d) and config.eps_d > 0, "eps_d must be > 0")
    _require(_is_number(config.delta_sim) and 0 < config.delta_sim < 1, "delta_sim must lie in (0, 1)")
    _require(config.theta_mode in THETA_MODES, f"theta_mode must be one of {THETA_MODES}")
    _require(isinstance(config.e_w_values, list) and config.e_w_values, "e_w_values must be a non-empty list")
    for e in config.e_w_values:
        _require(_is_number(e) and 0 <= e <= 2, f"every e_w must lie in [0, 2], got {e!r}")
    _require(isinstance(config.error_curve, list), "error_curve must be a list")
    if config.error_curve:
        _require(len(config.error_curve) == config.w + 1,
                 f"error_curve needs w+1={config.w + 1} entries, got {len(config.error_curve)}")
        for e in config.error_curve:
            _require(_is_number(e) and 0 <= e <= 2, f"error_curve entries must lie in [0, 2], got {e!r}")

    _require(isinstance(config.seeds, list) and config.seeds, "seeds must be a non-empty list")
    for seed in config.seeds:
        _require(_is_int(seed) and seed >= 0, f"seeds must be nonnegative integers, got {seed!r}")
    _require(_is_number(config.zeta) and config.zeta > 0, "zeta must be > 0")
    _require(config.detection_norm in DETECTION_NORMS, f"detection_norm must be one of {sorted(DETECTION_NORMS)}")
    _require(_is_int(config.dual_iters) and config.dual_iters >= 1, "dual_iters must be an integer >= 1")
    _require(_is_int(config.warm_iters) and config.warm_iters >= 1, "warm_iters must be an integer >= 1")
    _require(_is_int(config.workers) and config.workers >= 1, "workers must be an integer >= 1")
    _require(isinstance(config.out_dir, str) and config.out_dir, "out_dir must be a non-empty string")
    _require(isinstance(config.export_traces, bool), "export_traces must be true or false")

    if "plc" in config.controllers:
        num_states = PRESET_BUILDERS[config.preset]().num_states
        for V in config.v_values:
            for e_w in effective_e_w_values(config):
                try:
                    params = derive_params(V, config.c, config.w, config.eps_d, e_w, config.theta_mode,
                                           config.delta_sim)
                    ade_params_for(params, num_states, config.error_curve or None, config.detection_norm)
                except ParameterError as e:
                    raise ConfigError(f"PLC parameters for V={V}, e_w={e_w}: {e}") from e
    return config


def effective_e_w_values(config):
    """An explicit error curve replaces the e_w sweep by its own average."""
    if config.error_curve:
        return [sum(float(e) for e in config.error_curve) / len(config.error_curve)]
    return [float(e) for e in config.e_w_values]
