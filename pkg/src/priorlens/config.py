"""Experiment configuration: hyperparameter grids and flat key/value config files."""
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXPERIMENTS = ("normal", "ridge", "custom")
ALL_CRITERIA = ("cv", "waic", "waicr", "waicrs", "dic", "g", "f")
REQUIRED_KEYS = ("experiment", "n", "replications", "seed")


@dataclass(frozen=True)
class GridSpec:
    """``count`` equally spaced points on an interval with open or closed ends.

    An open end is excluded by offsetting the grid one step inward, so
    ``GridSpec(-2.5, 2.5, 100)`` gives ``-2.45, -2.40, ..., 2.50``.
    """

    low: float
    high: float
    count: int
    closed_low: bool = False
    closed_high: bool = True

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(f"grid needs low < high, got [{self.low}, {self.high}]")
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError("grid count must be a positive integer")

    @property
    def step(self):
        gaps = self.count - 1 + (not self.closed_low) + (not self.closed_high)
        return (self.high - self.low) / max(gaps, 1)

    def points(self):
        if self.count == 1:
            return np.array([self.high if self.closed_high else self.low])
        start = self.low if self.closed_low else self.low + self.step
        return start + self.step * np.arange(self.count)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int
    replications: int
    seed: int
    grid: GridSpec
    grid_param: str
    fixed_hypers: dict = field(default_factory=dict)
    output_path: Optional[str] = None
    criteria_enabled: tuple = ALL_CRITERIA
    sigma: float = 0.1
    dim: int = 5
    design_size: int = 2000
    n_values: tuple = (25, 50, 100, 200, 400)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        unknown = set(self.criteria_enabled) - set(ALL_CRITERIA)
        if unknown:
            raise ConfigError(f"unknown criteria {sorted(unknown)}")

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        grid_kw = {k[5:]: kw.pop(k) for k in list(kw) if k.startswith("grid_") and k != "grid_param"}
        cfg = replace(self, **kw)
        if grid_kw:
            cfg = replace(cfg, grid=replace(cfg.grid, **grid_kw))
        return cfg


def normal_defaults(**kw):
    base = dict(
        experiment="normal",
        n=25,
        replications=10_000,
        seed=1,
        grid=GridSpec(-2.5, 2.5, 100),
        grid_param="mu",
        fixed_hypers={"lambda": 0.01, "epsilon": 0.01},
    )
    base.update(kw)
    return ExperimentConfig(**base)


def ridge_defaults(**kw):
    base = dict(
        experiment="ridge",
        n=100,
        replications=1000,
        seed=1,
        grid=GridSpec(0.0, 10.0, 100),
        grid_param="lambda",
    )
    base.update(kw)
    return ExperimentConfig(**base)


DEFAULTS = {"normal": normal_defaults, "ridge": ridge_defaults}


def config_from_mapping(raw, require=REQUIRED_KEYS):
    """Build a config from a flat mapping; grid and fixed values may be omitted."""
    for key in require:
        if key not in raw:
            raise ConfigError(f"missing config key: {key}")
    raw = dict(raw)
    exp = raw.pop("experiment")
    if exp not in DEFAULTS:
        raise ConfigError(f"experiment {exp!r} cannot be run from a config file")
    cfg = DEFAULTS[exp]()
    fixed = dict(cfg.fixed_hypers)
    for key in [k for k in raw if k.startswith("fixed_")]:
        fixed[key[6:]] = float(raw.pop(key))
    grid_kw = {k[5:]: raw.pop(k) for k in list(raw) if k.startswith("grid_") and k != "grid_param"}
    known = {
        "n": int,
        "replications": int,
        "seed": int,
        "grid_param": str,
        "output_path": str,
        "criteria_enabled": tuple,
        "sigma": float,
        "dim": int,
        "design_size": int,
        "n_values": tuple,
    }
    kw = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
        kw[key] = known[key](value)
    try:
        grid = replace(cfg.grid, **grid_kw)
        return replace(cfg, grid=grid, fixed_hypers=fixed, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat key/value pairs; found tables {nested}")
    return config_from_mapping(raw)
