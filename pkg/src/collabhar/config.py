"""Run configuration files (flat TOML, unknown keys rejected).

Keys and defaults::

    dataset_root   = "data"           # relative to the config file
    sensor_configs = ["E_WRIST", "A_WRIST", "A_CALF", "E_WRIST+A_WRIST",
                      "A_WRIST+A_CALF", "E_WRIST+A_WRIST+A_CALF"]
    modes          = ["SINGLE_USER", "PAIRWISE"]
    variants       = ["FULL", "LIFT_DROP_NULL"]
    window_s       = 5.0
    step_s         = 1.0
    clip_mv        = 3.0
    smooth_radius  = 3
    learning_rate  = 0.1
    epochs         = 300
    l2             = 0.001
    seed           = 0
    out_dir        = "out"            # relative to the config file
    workers        = 1
    save_models    = false
"""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import tomli_w

from .classify import Hyperparams
from .evaluate import DEFAULT_SENSOR_CONFIGS, ExperimentConfig, parse_sensor_config
from .preprocess import Mode, Variant

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATASET_ENV = "COLLABHAR_DATASET_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset_root: str = "data"
    sensor_configs: tuple = DEFAULT_SENSOR_CONFIGS
    modes: tuple = ("SINGLE_USER", "PAIRWISE")
    variants: tuple = ("FULL", "LIFT_DROP_NULL")
    window_s: float = 5.0
    step_s: float = 1.0
    clip_mv: float = 3.0
    smooth_radius: int = 3
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-3
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    save_models: bool = False

    def __post_init__(self):
        self.sensor_configs = tuple(self.sensor_configs)
        self.modes = tuple(self.modes)
        self.variants = tuple(self.variants)
        try:
            for sc in self.sensor_configs:
                parse_sensor_config(sc)
            for m in self.modes:
                Mode(m)
            for v in self.variants:
                Variant(v)
            self.hyperparams()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not (self.sensor_configs and self.modes and self.variants):
            raise ConfigError("sensor_configs, modes and variants must be non-empty")
        if not (self.window_s > 0 and self.step_s > 0 and self.clip_mv > 0):
            raise ConfigError("window_s, step_s and clip_mv must be positive")
        if self.smooth_radius < 0 or self.workers < 1:
            raise ConfigError("smooth_radius must be >= 0 and workers >= 1")

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.learning_rate, self.epochs, self.l2, self.seed)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            sensor_configs=self.sensor_configs,
            modes=self.modes,
            variants=self.variants,
            window_s=self.window_s,
            step_s=self.step_s,
            clip_mv=self.clip_mv,
            smooth_radius=self.smooth_radius,
            hyperparams=self.hyperparams(),
            workers=self.workers,
        )

    def to_toml(self) -> str:
        doc = asdict(self)
        for key in ("sensor_configs", "modes", "variants"):
            doc[key] = list(doc[key])
        return tomli_w.dumps(doc)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if kind == "tuple":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{key} must be a list of strings")
        return tuple(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def config_from_dict(doc: dict, base_dir=None) -> RunConfig:
    unknown = sorted(set(doc) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in doc.items()}
    if base_dir is not None:
        for key in ("dataset_root", "out_dir"):
            raw = values.get(key, getattr(RunConfig, key))
            values[key] = str((Path(base_dir) / raw).resolve())
    return RunConfig(**values)


def load_run_config(path, environ=None) -> RunConfig:
    """Read a run config; the dataset-root environment variable overrides the file."""
    environ = os.environ if environ is None else environ
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(doc, base_dir=path.parent)
    if environ.get(DATASET_ENV):
        cfg.dataset_root = str(Path(environ[DATASET_ENV]).resolve())
    return cfg
