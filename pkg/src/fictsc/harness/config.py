"""Experiment configuration and the flat ``key = value`` config file format.

Nested recipe fields use dotted keys, e.g. ``recipe.offset = 1.5``.  Lines
starting with ``#`` and trailing ``# ...`` comments are ignored.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from fictsc.harness.synthetic import SyntheticShiftRecipe

OPTIMIZERS = ("plain", "fic", "sam")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # data: either train/test files or the synthetic recipe
    train_path: str = ""
    test_path: str = ""
    data_format: str = ""
    pad_length: int = 0
    recipe: SyntheticShiftRecipe = field(default_factory=SyntheticShiftRecipe)
    zscore: bool = True
    instance_norm: bool = False
    # model
    architecture: str = "inception-lite"
    width: int = 128
    blocks: int = 1
    # optimization
    optimizer: str = "fic"
    epsilon: float = 2.0
    rho: float = 0.05
    lr: float = 5e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    # reporting
    alpha: float = 0.05
    sharpness: bool = True

    def validate(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.epsilon > 0 or not self.rho > 0:
            raise ConfigError("epsilon and rho must be positive")
        if bool(self.train_path) != bool(self.test_path):
            raise ConfigError("train_path and test_path must be given together")
        try:
            self.recipe.validate()
        except ValueError as exc:
            raise ConfigError(f"recipe: {exc}") from None
        return self

    @property
    def synthetic(self):
        return not self.train_path

    def snapshot(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "recipe":
                for k, rv in dataclasses.asdict(v).items():
                    out[f"recipe.{k}"] = rv
            else:
                out[f.name] = v
        return out


def _coerce(value, current, key):
    if isinstance(current, bool):
        low = str(value).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, (list, tuple)):
            text = str(value).strip().strip("[]")
            return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return str(value).strip()


def apply_overrides(config, values):
    """Set fields from a ``{key: value}`` mapping of strings (dotted keys for the recipe)."""
    for key, value in values.items():
        target, name = config, key
        if key.startswith("recipe."):
            target, name = config.recipe, key.split(".", 1)[1]
        if not any(f.name == name for f in dataclasses.fields(target)) or name == "recipe":
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, name, _coerce(value, getattr(target, name), key))
    return config


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def load_config(path=None, overrides=None):
    config = ExperimentConfig()
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        apply_overrides(config, parse_config_text(text))
    if overrides:
        apply_overrides(config, overrides)
    return config.validate()
