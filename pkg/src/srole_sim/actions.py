"""Assignment actions shared by the schedulers and the shields."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation
from .topology import Demand


@dataclass(frozen=True)
class Placement:
    task: str
    node: int
    demand: Demand
    agent: int

    def moved(self, node: int) -> "Placement":
        return Placement(self.task, node, self.demand, self.agent)


@dataclass
class AssignmentAction:
    """One agent's layer -> node schedule for one job (row sums of the 0/1 matrix are 1)."""
    agent: int
    placements: dict[str, Placement] = field(default_factory=dict)

    @property
    def mapping(self) -> dict[str, int]:
        return {t: p.node for t, p in self.placements.items()}

    def matrix(self, tasks: Sequence[str], nodes: Sequence[int]) -> np.ndarray:
        col = {n: j for j, n in enumerate(nodes)}
        a = np.zeros((len(tasks), len(nodes)), dtype=int)
        for i, t in enumerate(tasks):
            a[i, col[self.placements[t].node]] = 1
        return a


class JointAction(Mapping[str, Placement]):
    """Union of all agents' placements for one timestep, keyed by task id."""

    def __init__(self, placements: Iterable[Placement] = ()):
        self._p: dict[str, Placement] = {}
        for p in sorted(placements, key=lambda p: p.task):
            if p.task in self._p:
                raise ContractViolation(f"task {p.task} scheduled twice in one joint action")
            self._p[p.task] = p

    def __getitem__(self, task: str) -> Placement:
        return self._p[task]

    def __iter__(self):
        return iter(self._p)

    def __len__(self):
        return len(self._p)

    def __eq__(self, other):
        return isinstance(other, JointAction) and self._p == other._p

    def __repr__(self):
        return f"JointAction({self.mapping})"

    @property
    def mapping(self) -> dict[str, int]:
        return {t: p.node for t, p in self._p.items()}

    def on(self, node: int) -> list[Placement]:
        return [p for p in self._p.values() if p.node == node]

    def nodes(self) -> set[int]:
        return {p.node for p in self._p.values()}

    def replace(self, task: str, node: int) -> "JointAction":
        return JointAction(p.moved(node) if p.task == task else p for p in self._p.values())

    def subset(self, tasks: Iterable[str]) -> "JointAction":
        return JointAction(self._p[t] for t in tasks)

    def merged(self, other: "JointAction") -> "JointAction":
        """Entries of ``other`` override ours."""
        return JointAction({**self._p, **dict(other.items())}.values())

    def as_records(self) -> list[list]:
        return [[p.task, p.node, p.agent] for p in self._p.values()]


def joint_action(per_agent: Iterable[AssignmentAction]) -> JointAction:
    return JointAction(p for a in per_agent for p in a.placements.values())
