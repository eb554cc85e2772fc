"""Synthetic DNN partition graphs and background (non-ML) load.

Layer demands are drawn from fixed per-preset ranges instead of being
profiled on real hardware. Every generator takes an explicit seed so the
same workload can be replayed against each scheduling method.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .topology import Demand

MODEL_KINDS = ("vgg16-like", "googlenet-like", "rnn-like")

# (cpu host-ratio, mem MB, transfer MB) ranges per preset; see README.
CPU_RANGE = (0.01, 0.05)
MEM_RANGE = (48.0, 160.0)
TRANSFER_RANGE = (1.0, 64.0)
RNN_TRANSFER_RANGE = (32.0, 128.0)
# googlenet levels hold up to 4 parallel branches, each a fraction of a level's work
BRANCH_SCALE = 0.5

BACKGROUND_CPU = (0.05, 0.15)
BACKGROUND_MEM = (64.0, 192.0)
BACKGROUND_BW = (2.0, 10.0)
MAX_WORKLOAD = 6


@dataclass(frozen=True)
class LayerProfile:
    layer_id: str
    level: int
    cpu_demand: float
    mem_demand: float
    successors: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        for v in (self.cpu_demand, self.mem_demand, *(s for _, s in self.successors)):
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"layer {self.layer_id}: demands must be finite and >= 0")
        if self.level < 0:
            raise ValueError(f"layer {self.layer_id}: negative level")

    @property
    def transfer_out(self) -> float:
        """Total MB sent to the next level per iteration."""
        return float(sum(size for _, size in self.successors))


@dataclass(frozen=True)
class ModelPartitionGraph:
    model_name: str
    layers: tuple[LayerProfile, ...]
    num_levels: int

    def __post_init__(self):
        if self.num_levels <= 0:
            raise ValueError("num_levels must be positive")
        by_id = {l.layer_id: l for l in self.layers}
        if len(by_id) != len(self.layers):
            raise ValueError("duplicate layer ids")
        levels = {l.level for l in self.layers}
        if levels != set(range(self.num_levels)):
            raise ValueError("levels must cover 0..num_levels-1 with at least one layer each")
        for layer in self.layers:
            last = layer.level == self.num_levels - 1
            if last != (not layer.successors):
                raise ValueError(f"layer {layer.layer_id}: successors must be empty iff final level")
            for succ, _ in layer.successors:
                if succ not in by_id or by_id[succ].level != layer.level + 1:
                    raise ValueError(f"layer {layer.layer_id}: successor {succ} not on next level")

    def level(self, i: int) -> list[LayerProfile]:
        return [l for l in self.layers if l.level == i]

    def layer(self, layer_id: str) -> LayerProfile:
        for l in self.layers:
            if l.layer_id == layer_id:
                return l
        raise KeyError(layer_id)

    def predecessors(self, layer_id: str) -> list[str]:
        return [l.layer_id for l in self.layers if any(s == layer_id for s, _ in l.successors)]

    @property
    def total_demand(self) -> Demand:
        return Demand(
            sum(l.cpu_demand for l in self.layers),
            sum(l.mem_demand for l in self.layers),
            0.0,
        )

    def serialize(self) -> str:
        """One layer per line: ``id level cpu mem succ:size,succ:size``."""
        lines = [f"# model {self.model_name} levels {self.num_levels}"]
        for l in self.layers:
            succ = ",".join(f"{s}:{size:.6f}" for s, size in l.successors) or "-"
            lines.append(f"{l.layer_id} {l.level} {l.cpu_demand:.6f} {l.mem_demand:.6f} {succ}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ModelPartitionGraph":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split()
        if header[:2] != ["#", "model"] or header[3] != "levels":
            raise ValueError("missing model header line")
        layers = []
        for ln in lines[1:]:
            lid, level, cpu, mem, succ = ln.split()
            succs = () if succ == "-" else tuple(
                (s.split(":")[0], float(s.split(":")[1])) for s in succ.split(",")
            )
            layers.append(LayerProfile(lid, int(level), float(cpu), float(mem), succs))
        return cls(header[2], tuple(layers), int(header[4]))


def _level_widths(kind: str, rng: np.random.Generator) -> list[int]:
    if kind == "vgg16-like":
        return [1] * 16
    if kind == "googlenet-like":
        inner = rng.integers(1, 5, size=10).tolist()
        return [1, *inner, 1]
    if kind == "rnn-like":
        return [1] * 6
    raise ConfigError(f"unknown model_kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}",
                      key="model_kind")


def build_model_profile(model_kind: str, rng_seed: int) -> ModelPartitionGraph:
    """Generate a preset-shaped partition graph with seeded synthetic demands.

    Consecutive levels are fully connected; each edge carries its own
    activation transfer size.
    """
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model_kind {model_kind!r}; expected one of {', '.join(MODEL_KINDS)}",
                          key="model_kind")
    rng = np.random.default_rng(rng_seed)
    widths = _level_widths(model_kind, rng)
    scale = BRANCH_SCALE if model_kind == "googlenet-like" else 1.0
    t_lo, t_hi = RNN_TRANSFER_RANGE if model_kind == "rnn-like" else TRANSFER_RANGE

    ids = [[f"L{lvl:02d}" + (f"{chr(97 + k)}" if w > 1 else "") for k in range(w)]
           for lvl, w in enumerate(widths)]
    layers = []
    for lvl, w in enumerate(widths):
        for k in range(w):
            cpu = float(rng.uniform(*CPU_RANGE)) * scale
            mem = float(rng.uniform(*MEM_RANGE)) * scale
            succs: tuple[tuple[str, float], ...] = ()
            if lvl + 1 < len(widths):
                succs = tuple((s, round(float(rng.uniform(t_lo, t_hi)) * scale, 6))
                              for s in ids[lvl + 1])
            layers.append(LayerProfile(ids[lvl][k], lvl, round(cpu, 6), round(mem, 6), succs))
    return ModelPartitionGraph(model_kind, tuple(layers), len(widths))


@dataclass(frozen=True)
class BackgroundJob:
    job_id: str
    host: int
    cpu_demand: float
    mem_demand: float
    duration: float
    start: float = 0.0
    bw_demand: float = 0.0

    def __post_init__(self):
        if min(self.cpu_demand, self.mem_demand, self.bw_demand) < 0:
            raise ValueError("background demands must be non-negative")
        if self.duration <= 0:
            raise ValueError("background job duration must be positive")

    @property
    def demand(self) -> Demand:
        return Demand(self.cpu_demand, self.mem_demand, self.bw_demand)

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration


def background_demand(jobs: Iterable[BackgroundJob], node: int, t: float) -> Demand:
    if t < 0:
        raise ValueError("t must be >= 0")
    total = Demand(0.0, 0.0, 0.0)
    for job in jobs:
        if job.host == node and job.active(t):
            total = total + job.demand
    return total


def spawn_background(members: Sequence[int], workload_level: int, rng_seed: int,
                     duration: float = float("inf"), prefix: str = "bg") -> list[BackgroundJob]:
    """``workload_level`` PageRank-style occupancy jobs, hosts assigned round-robin.

    Demands for job i do not depend on ``workload_level``: the first x jobs
    of x+1 are the same jobs, so load is monotone in the level.
    """
    if not 0 <= workload_level <= MAX_WORKLOAD:
        raise ConfigError(f"workload_level out of [0,{MAX_WORKLOAD}]", key="workload_level")
    rng = np.random.default_rng(rng_seed)
    draws = rng.uniform(size=(MAX_WORKLOAD, 3))
    jobs = []
    for i in range(workload_level):
        cpu = float(BACKGROUND_CPU[0] + draws[i, 0] * (BACKGROUND_CPU[1] - BACKGROUND_CPU[0]))
        mem = float(BACKGROUND_MEM[0] + draws[i, 1] * (BACKGROUND_MEM[1] - BACKGROUND_MEM[0]))
        bw = float(BACKGROUND_BW[0] + draws[i, 2] * (BACKGROUND_BW[1] - BACKGROUND_BW[0]))
        jobs.append(BackgroundJob(f"{prefix}{i}", members[i % len(members)],
                                  round(cpu, 6), round(mem, 6), duration, 0.0, round(bw, 6)))
    return jobs


# Nominal iteration period used to turn per-iteration transfers into a bandwidth demand.
ITERATION_PERIOD_S = 20.0


def layer_demand(layer: LayerProfile) -> Demand:
    return Demand(layer.cpu_demand, layer.mem_demand, layer.transfer_out / ITERATION_PERIOD_S)


@dataclass(frozen=True)
class TrainingJob:
    """One DNN training job initiated by (and scheduled from) ``origin``."""
    job_id: str
    origin: int
    graph: ModelPartitionGraph

    def task_id(self, layer_id: str) -> str:
        return f"{self.job_id}/{layer_id}"

    @property
    def task_ids(self) -> list[str]:
        return [self.task_id(l.layer_id) for l in self.graph.layers]

    def demands(self) -> dict[str, Demand]:
        return {self.task_id(l.layer_id): layer_demand(l) for l in self.graph.layers}
