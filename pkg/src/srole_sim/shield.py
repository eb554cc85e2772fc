"""Centralized shield: detect overloads a joint action would cause and
replace as few assignments as possible.

The greedy pass evicts layers from an overloaded node in descending demand
weight and rehomes each on the neighbor with the lowest projected combined
utilization that stays under ``alpha``. When that greedy pass leaves
violations on a small instance, an exact search looks for the safe joint
action with the fewest changed assignments instead.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .actions import JointAction, Placement
from .topology import RESOURCES, Cluster, Demand, load_utilization

MAX_PASSES = 3
# exact repair only for joint actions up to this many layers
REPAIR_LIMIT = 10
REPAIR_BUDGET = 200_000


@dataclass(frozen=True)
class ShieldCorrection:
    original: tuple[str, int]
    replacement: tuple[str, int]
    penalized_agent: int
    penalty_units: int = 1

    def __post_init__(self):
        if self.replacement[1] == self.original[1]:
            raise ValueError("a correction must change the host")
        if self.penalty_units < 1:
            raise ValueError("penalty_units must be >= 1")

    @property
    def task(self) -> str:
        return self.original[0]


@dataclass
class ShieldReport:
    corrected: JointAction
    corrections: list[ShieldCorrection] = field(default_factory=list)
    unresolved: list[tuple[int, str]] = field(default_factory=list)
    collision_count: int = 0
    ops: int = 0
    messages: int = 0
    sessions: int = 0
    # nodes found overloaded before correction; not serialized
    detected: frozenset = field(default=frozenset(), compare=False)

    def penalties(self) -> dict[str, int]:
        """Penalty units per task."""
        out: dict[str, int] = {}
        for c in self.corrections:
            out[c.task] = out.get(c.task, 0) + c.penalty_units
        return out

    def to_json(self) -> str:
        return json.dumps({
            "corrected": self.corrected.as_records(),
            "corrections": [[c.original[0], c.original[1], c.replacement[1],
                             c.penalized_agent, c.penalty_units] for c in self.corrections],
            "unresolved": [list(u) for u in self.unresolved],
            "collision_count": self.collision_count,
            "ops": self.ops,
            "messages": self.messages,
            "sessions": self.sessions,
        }, sort_keys=True)


def combined(load: Demand, cap: Demand) -> float:
    return math.prod(load_utilization(load, cap))


def _over(load: Demand, cap: Demand, alpha: float) -> bool:
    return any(u > alpha for u in load_utilization(load, cap))


def _weight(demand: Demand, cap: Demand) -> float:
    return (demand.cpu / cap.cpu) * (demand.mem / cap.mem)


class ShieldScope:
    """The nodes one shield is responsible for, their capacities, the load
    already committed on them, and neighbor lists restricted to the scope."""

    def __init__(self, caps: Mapping[int, Demand], base: Mapping[int, Demand],
                 nbrs: Mapping[int, Iterable[int]]):
        self.caps = dict(caps)
        self.base = dict(base)
        self.nodes = sorted(self.caps)
        self.nbrs = {n: sorted(m for m in nbrs[n] if m in self.caps) for n in self.nodes}

    @classmethod
    def of_cluster(cls, cluster: Cluster, members: Iterable[int] | None = None) -> "ShieldScope":
        members = sorted(cluster.members if members is None else members)
        return cls({n: cluster.nodes[n].capacity for n in members},
                   {n: cluster.nodes[n].load for n in members},
                   {n: cluster.neighbors(n) for n in members})

    def project(self, joint: Iterable[Placement]) -> dict[int, Demand]:
        proj = dict(self.base)
        for p in joint:
            proj[p.node] = proj[p.node] + p.demand
        return proj


def virtual_assign(joint: JointAction, cluster: Cluster) -> dict[int, tuple[float, float, float]]:
    """Projected per-node utilization if every assignment landed; nothing is mutated."""
    scope = ShieldScope.of_cluster(cluster)
    proj = scope.project(joint.values())
    return {n: load_utilization(proj[n], scope.caps[n]) for n in scope.nodes}


def _find_alternative(demand: Demand, node: int, proj: dict[int, Demand], scope: ShieldScope,
                      alpha: float) -> tuple[int | None, int]:
    cands = scope.nbrs[node]
    ops = len(cands)  # one projected-utilization evaluation per candidate
    ranked = sorted(cands, key=lambda c: (combined(proj[c], scope.caps[c]), c))
    for c in ranked:
        ops += 1
        if not _over(proj[c] + demand, scope.caps[c], alpha):
            return c, ops
    return None, ops


_SLACK = 1e-9


def _headroom(node: int, proj: dict[int, Demand], scope: ShieldScope, alpha: float) -> tuple[float, ...] | None:
    """Per-resource max over neighbors of alpha * capacity - projected load."""
    cands = scope.nbrs[node]
    if not cands:
        return None
    return tuple(max(alpha * scope.caps[c][k] - proj[c][k] for c in cands) for k in range(3))


def find_alternative(layer, overloaded: int, joint: JointAction, cluster: Cluster,
                     alpha: float) -> int | None:
    """Neighbor of ``overloaded`` with the lowest projected combined utilization
    that can take ``layer`` without exceeding ``alpha``; None if there is none.

    ``layer`` is a task id in ``joint`` or a :class:`Placement`.
    """
    p = joint[layer] if isinstance(layer, str) else layer
    scope = ShieldScope.of_cluster(cluster)
    others = [q for q in joint.values() if q.task != p.task]
    proj = scope.project(others)
    alt, _ = _find_alternative(p.demand, overloaded, proj, scope, alpha)
    return alt


def _violations(proj: dict[int, Demand], scope: ShieldScope, alpha: float) -> list[tuple[int, str]]:
    out = []
    for n in scope.nodes:
        for k, u in zip(RESOURCES, load_utilization(proj[n], scope.caps[n])):
            if u > alpha:
                out.append((n, k))
    return out


def _exact_repair(joint: JointAction, scope: ShieldScope, alpha: float
                  ) -> tuple[dict[str, int] | None, int]:
    """Fewest moves that leave every node at or under ``alpha``. Only layers
    proposed for an overloaded node move, each to a neighbor of that node."""
    proj0 = scope.project(joint.values())
    over = {n for n in scope.nodes if _over(proj0[n], scope.caps[n], alpha)}
    if any(_over(scope.base[n], scope.caps[n], alpha) for n in over):
        return None, 0  # pre-existing load alone is unsafe; nothing we move fixes it
    tasks = [t for t in joint if joint[t].node in over and scope.nbrs[joint[t].node]]
    checks = 0
    for k in range(1, len(tasks) + 1):
        for subset in itertools.combinations(tasks, k):
            if not over <= {joint[t].node for t in subset}:
                continue  # every overloaded node has to shed something
            for targets in itertools.product(*(scope.nbrs[joint[t].node] for t in subset)):
                checks += 1
                if checks > REPAIR_BUDGET:
                    return None, checks
                proj = dict(proj0)
                for t, m in zip(subset, targets):
                    p = joint[t]
                    proj[p.node] = proj[p.node] - p.demand
                    proj[m] = proj[m] + p.demand
                if not any(_over(proj[n], scope.caps[n], alpha) for n in scope.nodes):
                    return dict(zip(subset, targets)), checks
    return None, checks


def run_shield(joint: JointAction, scope: ShieldScope, alpha: float,
               kappa_unit: float = 100.0, repair: bool = True,
               defer: frozenset[int] = frozenset()) -> ShieldReport:
    """Shield ``joint`` over ``scope``. Only layers in ``joint`` are movable.

    Nodes in ``defer`` get safe moves only; overloads left on them are
    reported unresolved for another shield to handle, without the fallback
    push or the exact repair.

    ``kappa_unit`` is not used for the decision itself; each correction
    carries one penalty unit that the engine turns into ``-kappa_unit``.
    """
    for p in joint.values():
        if p.node not in scope.caps:
            raise ValueError(f"task {p.task} targets node {p.node} outside the shield scope")
    current = dict(joint.items())
    proj = scope.project(current.values())
    # one record received per node state and per placement, then one projection per node
    ops = len(scope.nodes) + len(joint) + len(scope.nodes)
    detected: set[int] = set()
    corrections: list[ShieldCorrection] = []
    # layers already pushed by the fallback stay put, so two overloaded nodes cannot trade them back and forth
    pinned: set[str] = set()
    # deferred nodes a full sweep could not fix; handed over instead of rescanned
    handed: set[int] = set()

    def move(p: Placement, dst: int):
        nonlocal ops
        ops += 2  # re-project source and destination
        proj[p.node] = proj[p.node] - p.demand
        proj[dst] = proj[dst] + p.demand
        current[p.task] = p.moved(dst)
        corrections.append(ShieldCorrection((p.task, p.node), (p.task, dst), p.agent, 1))

    for _ in range(MAX_PASSES):
        changed = False
        for n in scope.nodes:
            cap = scope.caps[n]
            if n in handed or not _over(proj[n], cap, alpha):
                continue
            detected.add(n)
            ranked = sorted((p for p in current.values() if p.node == n and p.task not in pinned),
                            key=lambda p: (-_weight(p.demand, cap), p.task))
            stuck = []
            room = None
            for p in ranked:
                if not _over(proj[n], cap, alpha):
                    break
                # cheap screen: a layer larger than every neighbor's headroom in some resource cannot move
                if room is None:
                    room = _headroom(n, proj, scope, alpha)
                    ops += len(scope.nbrs[n])
                ops += 1
                if room is not None and any(x > r + _SLACK * max(1.0, abs(r)) for x, r in zip(p.demand, room)):
                    stuck.append(p)
                    continue
                alt, cost = _find_alternative(p.demand, n, proj, scope, alpha)
                ops += cost
                if alt is None:
                    # the failed search evaluated every neighbor, so fresh headroom comes free
                    room = _headroom(n, proj, scope, alpha)
                    stuck.append(p)
                    continue
                # moves only add load to neighbors, so the stale headroom stays a safe upper bound
                move(p, alt)
                changed = True
            if n in defer and stuck and _over(proj[n], cap, alpha):
                handed.add(n)
            # no safe host left: push the heaviest remaining layers to the least-loaded neighbor
            for p in stuck:
                if n in defer or not _over(proj[n], cap, alpha) or not scope.nbrs[n]:
                    break
                dst = min(scope.nbrs[n], key=lambda c: (combined(proj[c], scope.caps[c]), c))
                ops += len(scope.nbrs[n])
                move(p, dst)
                pinned.add(p.task)
                changed = True
        if not changed:
            break

    unresolved = _violations(proj, scope, alpha)
    if unresolved and repair and not defer and len(joint) <= REPAIR_LIMIT:
        moves, checks = _exact_repair(joint, scope, alpha)
        ops += checks
        if moves is not None:
            current = dict(joint.items())
            corrections = []
            for t in sorted(moves, key=lambda t: (joint[t].node,
                                                  -_weight(joint[t].demand, scope.caps[joint[t].node]), t)):
                p = joint[t]
                current[t] = p.moved(moves[t])
                corrections.append(ShieldCorrection((t, p.node), (t, moves[t]), p.agent, 1))
            unresolved = []

    return ShieldReport(JointAction(current.values()), corrections, unresolved, len(detected), ops,
                        detected=frozenset(detected))


def shield_step(joint: JointAction, cluster: Cluster, alpha: float,
                kappa_unit: float = 100.0) -> ShieldReport:
    """Cluster-wide shield over every member of ``cluster``."""
    return run_shield(joint, ShieldScope.of_cluster(cluster), alpha, kappa_unit)
