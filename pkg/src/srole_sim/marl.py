"""Tabular Q-learning agents for layer placement.

Each agent places its job level by level. A layer decision is keyed by the
layer's discretized demand (state) and by the candidate node's discretized
availability plus whether it already hosts a predecessor layer (action), so
one table generalizes across topologies and node labels.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import AssignmentAction, JointAction, Placement, joint_action
from .errors import ContractViolation, SchedulingError
from .topology import Cluster, EdgeNode
from .workload import LayerProfile, ModelPartitionGraph, TrainingJob, layer_demand

LEVELS = ("low", "medium", "high")
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    """Value ranges cut into three equal-width bands."""
    layer_cpu: tuple[float, float] = (0.0, 0.05)
    layer_mem: tuple[float, float] = (0.0, 160.0)
    transfer: tuple[float, float] = (0.0, 64.0)
    # absolute free capacity; anything above the range reads as high
    free_cpu: tuple[float, float] = (0.0, 0.6)
    free_mem: tuple[float, float] = (0.0, 1024.0)
    free_bw: tuple[float, float] = (0.0, 300.0)


DEFAULT_THRESHOLDS = Thresholds()


def band(value: float, lo: float, hi: float) -> int:
    """0/1/2 for the half-open thirds [lo, lo+w), [lo+w, lo+2w), [lo+2w, hi]; clamped."""
    f = (value - lo) / (hi - lo)
    return int(min(2, max(0, math.floor(3 * f))))


@dataclass(frozen=True)
class DiscreteState:
    layers: tuple[tuple[int, int, int], ...]
    nodes: tuple[tuple[int, int, int], ...]

    @property
    def key(self) -> tuple:
        return (self.layers, self.nodes)

    def names(self) -> tuple:
        return (tuple(tuple(LEVELS[v] for v in l) for l in self.layers),
                tuple(tuple(LEVELS[v] for v in n) for n in self.nodes))


def layer_levels(layer: LayerProfile, th: Thresholds = DEFAULT_THRESHOLDS) -> tuple[int, int, int]:
    return (band(layer.cpu_demand, *th.layer_cpu),
            band(layer.mem_demand, *th.layer_mem),
            band(layer.transfer_out, *th.transfer))


def node_levels(node: EdgeNode, th: Thresholds = DEFAULT_THRESHOLDS) -> tuple[int, int, int]:
    free = node.capacity - node.load
    return (band(free.cpu, *th.free_cpu),
            band(free.mem, *th.free_mem),
            band(free.bw, *th.free_bw))


def encode_state(job, visible: Sequence[EdgeNode],
                 thresholds: Thresholds = DEFAULT_THRESHOLDS) -> DiscreteState:
    """Discretize layer demands and visible-node availability.

    ``job`` may be a graph, a training job, or a plain list of layers.
    """
    if not visible:
        raise SchedulingError("no visible node to encode")
    if isinstance(job, TrainingJob):
        job = job.graph
    layers = job.layers if isinstance(job, ModelPartitionGraph) else job
    return DiscreteState(tuple(layer_levels(l, thresholds) for l in layers),
                         tuple(node_levels(n, thresholds) for n in visible))


class QTable:
    """(state key, action key) -> value; unvisited entries read as ``initial``."""

    def __init__(self, initial: float = 0.0):
        self.initial = float(initial)
        self.values: dict[tuple, dict[tuple, float]] = {}
        self.visits: dict[tuple, dict[tuple, int]] = {}

    def get(self, s, a) -> float:
        return self.values.get(s, {}).get(a, self.initial)

    def set(self, s, a, v: float) -> None:
        if not math.isfinite(v):
            raise ContractViolation("Q values must be finite")
        self.values.setdefault(s, {})[a] = float(v)

    def max_q(self, s) -> float:
        row = self.values.get(s)
        if not row:
            return self.initial
        # the action set always contains unvisited keys, which read as ``initial``
        return max(self.initial, max(row.values()))

    def __len__(self):
        return sum(len(r) for r in self.values.values())

    def copy(self) -> "QTable":
        q = QTable(self.initial)
        q.values = {s: dict(r) for s, r in self.values.items()}
        q.visits = {s: dict(r) for s, r in self.visits.items()}
        return q

    def to_text(self) -> str:
        entries = [[_listify(s), _listify(a), v, self.visits.get(s, {}).get(a, 0)]
                   for s, row in sorted(self.values.items()) for a, v in sorted(row.items())]
        return json.dumps({"format": "srole-qtable", "version": SNAPSHOT_VERSION,
                           "initial": self.initial, "entries": entries}, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "QTable":
        data = json.loads(text)
        if data.get("format") != "srole-qtable" or data.get("version") != SNAPSHOT_VERSION:
            raise ValueError("not a supported Q-table snapshot")
        q = cls(data["initial"])
        for s, a, v, n in data["entries"]:
            s, a = _tuplify(s), _tuplify(a)
            q.set(s, a, v)
            if n:
                q.visits.setdefault(s, {})[a] = int(n)
        return q

    def __eq__(self, other):
        return (isinstance(other, QTable) and self.initial == other.initial
                and self.values == other.values)


def _listify(x):
    return [_listify(v) for v in x] if isinstance(x, tuple) else x


def _tuplify(x):
    return tuple(_tuplify(v) for v in x) if isinstance(x, list) else x


@dataclass(frozen=True)
class RewardParams:
    rho: float = 1.0
    gamma_penalty: float = 50.0
    kappa_unit: float = 100.0

    def __post_init__(self):
        if min(self.rho, self.gamma_penalty, self.kappa_unit) <= 0:
            raise ValueError("reward parameters must be positive")


def compute_reward(outcome, params: RewardParams) -> float:
    """-gamma on memory violation, -c*kappa when the shield replaced c actions,
    else rho / sqrt(training time)."""
    if outcome.memory_violated:
        return -params.gamma_penalty
    c = outcome.shield_corrections
    if c > 0:
        return -(c * params.kappa_unit)
    if not outcome.training_time > 0:
        raise ContractViolation("training time must be positive")
    return params.rho / math.sqrt(outcome.training_time)


def update_q(agent: QTable, s, a, r: float, s_next, learn_rate: float, discount: float) -> QTable:
    """One-step Q-learning; ``s_next=None`` marks a terminal step."""
    if not math.isfinite(r):
        raise ContractViolation("reward must be finite")
    if not 0 < learn_rate <= 1 or not 0 <= discount < 1:
        raise ContractViolation("need 0 < learn_rate <= 1 and 0 <= discount < 1")
    future = 0.0 if s_next is None else agent.max_q(s_next)
    q = agent.get(s, a)
    agent.set(s, a, q + learn_rate * (r + discount * future - q))
    row = agent.visits.setdefault(s, {})
    row[a] = row.get(a, 0) + 1
    return agent


@dataclass(frozen=True)
class Step:
    """One layer decision, kept for the learning update."""
    task: str
    state: tuple
    action: tuple
    node: int


@dataclass
class Decision:
    action: AssignmentAction
    steps: list[Step]
    ops: int


def visible_order(cluster: Cluster, origin: int, full: bool = False) -> list[int]:
    """The agent's own node first, then others by distance (ties: lower id)."""
    others = set(cluster.members) - {origin} if full else cluster.neighbors(origin)
    return [origin] + sorted(others, key=lambda n: (cluster.distance(origin, n), n))


def select_action(agent: QTable, job: TrainingJob, view: Sequence[EdgeNode], epsilon: float,
                  rng: np.random.Generator, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> Decision:
    """Epsilon-greedy placement of every layer of ``job`` onto ``view``.

    ``view`` is the agent's private copy of its visible nodes (slot order);
    its own placements are assigned into it after each level, so later
    levels see the reduced availability. Greedy ties go to the smallest
    action key, then the earliest slot.
    """
    if not 0 <= epsilon <= 1:
        raise ContractViolation("epsilon must be in [0, 1]")
    if not view:
        raise SchedulingError(f"job {job.job_id}: agent has no visible node")
    graph = job.graph
    host: dict[str, int] = {}
    action = AssignmentAction(job.origin)
    steps: list[Step] = []
    ops = 0
    n = len(view)
    for lvl in range(graph.num_levels):
        layers = graph.level(lvl)
        state = encode_state(layers, view, thresholds)
        ops += len(layers) + n
        chosen = []
        for i, layer in enumerate(layers):
            preds = graph.predecessors(layer.layer_id)
            pred_nodes = {host[p] for p in preds} if preds else {job.origin}
            keys = [(int(v.node_id in pred_nodes), *state.nodes[j]) for j, v in enumerate(view)]
            s_key = state.layers[i]
            explore, pick = rng.random(), rng.random()
            ops += n
            if explore < epsilon:
                j = min(int(pick * n), n - 1)
            else:
                j = min(range(n), key=lambda j: (-agent.get(s_key, keys[j]), keys[j], j))
            chosen.append((layer, j, s_key, keys[j]))
        for layer, j, s_key, a_key in chosen:
            node = view[j]
            task = job.task_id(layer.layer_id)
            demand = layer_demand(layer)
            node.assign(task, demand)
            host[layer.layer_id] = node.node_id
            action.placements[task] = Placement(task, node.node_id, demand, job.origin)
            steps.append(Step(task, s_key, a_key, node.node_id))
    return Decision(action, steps, ops)


def learn(agent: QTable, steps: Sequence[Step], rewards: dict[str, float],
          learn_rate: float, discount: float) -> None:
    for i, step in enumerate(steps):
        s_next = steps[i + 1].state if i + 1 < len(steps) else None
        update_q(agent, step.state, step.action, rewards[step.task], s_next, learn_rate, discount)


def marl_schedule(agents: dict[int, QTable], cluster: Cluster, jobs: Sequence[TrainingJob],
                  epsilon: float, rng: np.random.Generator,
                  thresholds: Thresholds = DEFAULT_THRESHOLDS) -> tuple[JointAction, dict[str, Decision]]:
    """Every job's origin agent decides on its own view of the current cluster state.

    Agents do not see each other's choices, which is where collisions come from.
    """
    decisions = {}
    for job in jobs:
        view = [cluster.nodes[n].copy() for n in visible_order(cluster, job.origin)]
        decisions[job.job_id] = select_action(agents[job.origin], job, view, epsilon, rng, thresholds)
    return joint_action(d.action for d in decisions.values()), decisions


def centralized_rl_schedule(head_agent: QTable, cluster: Cluster, jobs: Sequence[TrainingJob],
                            epsilon: float, rng: np.random.Generator,
                            thresholds: Thresholds = DEFAULT_THRESHOLDS) -> tuple[JointAction, dict[str, Decision]]:
    """The cluster head schedules every job in turn on one shared view.

    Each job's reported ``ops`` include the head's work on all earlier jobs,
    since they queue on the same node.
    """
    view = {n: cluster.nodes[n].copy() for n in cluster.members}
    decisions = {}
    queued = 0
    for job in jobs:
        order = visible_order(cluster, job.origin, full=True)
        d = select_action(head_agent, job, [view[n] for n in order], epsilon, rng, thresholds)
        queued += d.ops
        decisions[job.job_id] = Decision(d.action, d.steps, queued)
    return joint_action(d.action for d in decisions.values()), decisions


def epsilon_at(episode: int, total: int, start: float = 1.0, end: float = 0.05,
               fraction: float = 0.6) -> float:
    """Linear anneal from ``start`` to ``end`` over the first ``fraction`` of episodes."""
    horizon = max(1, int(round(total * fraction)))
    if episode >= horizon:
        return end
    return start + (end - start) * episode / horizon
