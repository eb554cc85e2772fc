"""Flat ``key = value`` experiment configuration (TOML subset).

Any key may hold a list instead of a scalar; ``grid`` expands those into
one :class:`SimConfig` per combination for campaigns.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ConfigFileError, ConfigParseError
from .workload import MAX_WORKLOAD, MODEL_KINDS

METHODS = ("rl", "marl", "srole-c", "srole-d")


@dataclass(frozen=True)
class SimConfig:
    method: str = "srole-c"
    model_kind: str = "vgg16-like"
    num_nodes: int = 25
    nodes_per_cluster: int = 5
    subclusters_per_cluster: int = 2
    radius: float = 60.0
    alpha: float = 0.9
    rho: float = 1.0
    gamma_penalty: float = 50.0
    kappa_unit: float = 100.0
    workload_level: int = 6
    jobs_per_cluster: int = 3
    iterations: int = 50
    learn_rate: float = 0.1
    discount: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.6
    eval_epsilon: float = 0.05
    pretrain_episodes: int = 2000
    demand_noise: float = 0.1
    unit_time: float = 10.0
    param_size_mb: float = 100.0
    snapshot_interval: float = 600.0
    ops_per_sec: float = 1e6
    base_seed: int = 0
    policy_seed: int = 1
    unresolved_threshold: int = 0

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def _check(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigError(message, key=key)


def validate(c: SimConfig) -> None:
    _check(c.method in METHODS, "method",
           f"method {c.method!r} invalid; expected one of {', '.join(METHODS)}")
    _check(c.model_kind in MODEL_KINDS, "model_kind",
           f"model_kind {c.model_kind!r} invalid; expected one of {', '.join(MODEL_KINDS)}")
    _check(0 < c.alpha <= 1, "alpha", "alpha out of (0,1]")
    for key in ("num_nodes", "nodes_per_cluster", "subclusters_per_cluster", "jobs_per_cluster",
                "iterations"):
        _check(getattr(c, key) >= 1, key, f"{key} must be >= 1")
    _check(c.subclusters_per_cluster <= c.nodes_per_cluster, "subclusters_per_cluster",
           "subclusters_per_cluster cannot exceed nodes_per_cluster")
    _check(c.jobs_per_cluster <= c.nodes_per_cluster, "jobs_per_cluster",
           "jobs_per_cluster cannot exceed nodes_per_cluster (one job per origin node)")
    _check(0 <= c.workload_level <= MAX_WORKLOAD, "workload_level",
           f"workload_level out of [0,{MAX_WORKLOAD}]")
    for key in ("rho", "gamma_penalty", "kappa_unit", "unit_time", "param_size_mb",
                "snapshot_interval", "ops_per_sec", "radius"):
        v = getattr(c, key)
        _check(v > 0 and not math.isnan(v), key, f"{key} must be > 0")
    _check(0 < c.learn_rate <= 1, "learn_rate", "learn_rate out of (0,1]")
    _check(0 <= c.discount < 1, "discount", "discount out of [0,1)")
    for key in ("epsilon_start", "epsilon_end", "eval_epsilon"):
        _check(0 <= getattr(c, key) <= 1, key, f"{key} out of [0,1]")
    _check(0 < c.epsilon_fraction <= 1, "epsilon_fraction", "epsilon_fraction out of (0,1]")
    _check(c.pretrain_episodes >= 0, "pretrain_episodes", "pretrain_episodes must be >= 0")
    _check(0 <= c.demand_noise < 1, "demand_noise", "demand_noise out of [0,1)")
    _check(c.unresolved_threshold >= 0, "unresolved_threshold", "unresolved_threshold must be >= 0")


def _coerce(key: str, value: Any) -> Any:
    if key not in FIELDS:
        raise ConfigError(f"unknown key {key!r}", key=key)
    kind = FIELDS[key].type
    if kind == "str":
        ok = isinstance(value, str)
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    if not ok:
        raise ConfigError(f"{key} expects {kind}, got {value!r}", key=key)
    return value


def load_raw(path) -> dict[str, list]:
    """Read a config file into ``key -> list of values`` (scalars become one-element lists)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigFileError(f"cannot read config {p}: {e.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigParseError(f"{p}: {e}") from None
    out = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigParseError(f"{p}: tables are not supported ({key!r})", key=key)
        values = value if isinstance(value, list) else [value]
        if not values:
            raise ConfigError(f"{key} has an empty list", key=key)
        out[key] = [_coerce(key, v) for v in values]
    return out


def grid(raw: dict[str, list], **overrides) -> list[SimConfig]:
    """Every combination of the list-valued keys, in file order."""
    raw = {**raw, **{k: [v] for k, v in overrides.items() if v is not None}}
    keys = list(raw)
    return [SimConfig(**dict(zip(keys, combo))) for combo in itertools.product(*(raw[k] for k in keys))]


def parse_config(path, **overrides) -> SimConfig:
    """Single configuration; list-valued keys are rejected (use ``grid``)."""
    raw = load_raw(path)
    for key, values in raw.items():
        if len(values) > 1 and key not in overrides:
            raise ConfigError(f"{key} holds a list; only campaigns accept grids", key=key)
    return grid(raw, **overrides)[0]
