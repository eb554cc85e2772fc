"""Edge nodes, clusters, sub-clusters and resource accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation

RESOURCES = ("cpu", "mem", "bw")
# demand_weight only uses node-local resources; bandwidth belongs to links
NODE_RESOURCES = ("cpu", "mem")

# Container column of the resource table, dealt round-robin over nodes.
MEM_TIERS = (768.0, 1024.0, 1536.0, 2048.0, 4096.0)
CPU_TIERS = (0.3, 0.475, 0.65, 0.825, 1.0)
BW_TIERS = (50.0, 100.0, 200.0, 500.0, 1000.0)


class Demand(NamedTuple):
    cpu: float
    mem: float
    bw: float

    def __add__(self, other):
        return Demand(self.cpu + other[0], self.mem + other[1], self.bw + other[2])

    def __sub__(self, other):
        return Demand(self.cpu - other[0], self.mem - other[1], self.bw - other[2])

    def scaled(self, f: float) -> "Demand":
        return Demand(self.cpu * f, self.mem * f, self.bw * f)


ZERO = Demand(0.0, 0.0, 0.0)


def total(demands) -> Demand:
    out = ZERO
    for d in demands:
        out = out + d
    return out


@dataclass
class EdgeNode:
    node_id: int
    position: tuple[float, float]
    capacity: Demand
    assigned: dict[str, Demand] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.capacity) <= 0:
            raise ValueError(f"node {self.node_id}: capacities must be strictly positive")

    def assign(self, task: str, demand: Demand) -> None:
        if task in self.assigned:
            raise ContractViolation(f"task {task} already assigned to node {self.node_id}")
        self.assigned[task] = Demand(*demand)

    def release(self, task: str) -> Demand:
        return self.assigned.pop(task)

    @property
    def load(self) -> Demand:
        return total(self.assigned.values())

    @property
    def combined_capacity(self) -> float:
        return float(np.prod(self.capacity))

    def copy(self) -> "EdgeNode":
        return EdgeNode(self.node_id, self.position, self.capacity, dict(self.assigned))


def _kind_index(k: str) -> int:
    try:
        return RESOURCES.index(k)
    except ValueError:
        raise ContractViolation(f"unknown resource kind {k!r}") from None


def load_utilization(load: Sequence[float], capacity: Sequence[float]) -> tuple[float, ...]:
    """Per-kind D_k / C_k for an arbitrary (possibly projected) load."""
    return tuple(d / c for d, c in zip(load, capacity))


def utilization(node: EdgeNode, k: str) -> float:
    i = _kind_index(k)
    return node.load[i] / node.capacity[i]


def combined_utilization(node: EdgeNode) -> float:
    return math.prod(load_utilization(node.load, node.capacity))


def is_overloaded(node: EdgeNode, alpha: float) -> bool:
    return load_overloaded(node.load, node.capacity, alpha)


def load_overloaded(load, capacity, alpha: float) -> bool:
    return any(u > alpha for u in load_utilization(load, capacity))


def demand_weight(demand: Sequence[float], node: EdgeNode) -> float:
    """Product of demand/capacity ratios over cpu and mem.

    Accepts a :class:`Demand` or anything exposing ``cpu_demand``/``mem_demand``.
    """
    if hasattr(demand, "cpu_demand"):
        demand = (demand.cpu_demand, demand.mem_demand)
    return (demand[0] / node.capacity.cpu) * (demand[1] / node.capacity.mem)


@dataclass
class Cluster:
    cluster_id: int
    members: list[int]
    head: int
    links: dict[tuple[int, int], float]
    nodes: dict[int, EdgeNode]
    radius: float = math.inf

    def __post_init__(self):
        if self.head not in self.members:
            raise ValueError("cluster head must be a member")
        for (a, b), bw in self.links.items():
            if bw <= 0 or self.links.get((b, a)) != bw:
                raise ValueError(f"link {a}-{b} must be symmetric with positive bandwidth")
        self._nbrs: dict[tuple[int, float], frozenset[int]] = {}

    def bandwidth(self, a: int, b: int) -> float:
        if a == b:
            return math.inf
        return self.links[(a, b)]

    def neighbors(self, node: int, radius: float | None = None) -> frozenset[int]:
        r = self.radius if radius is None else radius
        key = (node, r)
        if key not in self._nbrs:
            self._nbrs[key] = frozenset(neighbors(node, self, r))
        return self._nbrs[key]

    def distance(self, a: int, b: int) -> float:
        pa, pb = self.nodes[a].position, self.nodes[b].position
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1])

    def copy(self) -> "Cluster":
        return Cluster(self.cluster_id, list(self.members), self.head, dict(self.links),
                       {n: node.copy() for n, node in self.nodes.items()}, self.radius)


@dataclass(frozen=True)
class SubCluster:
    subcluster_id: int
    parent: int
    members: tuple[int, ...]
    shield_host: int

    def __post_init__(self):
        if not self.members or self.shield_host not in self.members:
            raise ValueError("sub-cluster needs members and a member shield host")


def neighbors(node: int, cluster: Cluster, radius: float) -> set[int]:
    if node not in cluster.members:
        raise ContractViolation(f"node {node} is not in cluster {cluster.cluster_id}")
    return {m for m in cluster.members
            if m != node and cluster.distance(node, m) <= radius}


def strongest(node_ids, nodes: dict[int, EdgeNode]) -> int:
    """Member with the largest combined capacity; ties go to the lowest id."""
    return min(node_ids, key=lambda n: (-nodes[n].combined_capacity, n))


def partition_subclusters(cluster: Cluster, count: int) -> list[SubCluster]:
    """Split a cluster into ``count`` proximity groups of near-equal size
    (Lloyd iterations with capacity-limited assignment).

    Seeding is farthest-first starting from the lowest node id, so the
    result is deterministic.
    """
    members = sorted(cluster.members)
    if not 1 <= count <= len(members):
        raise ConfigError(f"subcluster count {count} out of [1, {len(members)}]",
                          key="subclusters_per_cluster")
    pts = np.array([cluster.nodes[m].position for m in members], dtype=float)

    centers = [0]
    while len(centers) < count:
        d = np.min(np.linalg.norm(pts[:, None, :] - pts[centers][None, :, :], axis=2), axis=1)
        d[centers] = -1.0
        centers.append(int(np.argmax(d)))
    cent = pts[centers].copy()

    cap = -(-len(members) // count)
    labels = np.full(len(members), -1)
    for _ in range(100):
        dist = np.linalg.norm(pts[:, None, :] - cent[None, :, :], axis=2)
        # nearest center with room left; no group exceeds ceil(n/count)
        new = np.full(len(members), -1)
        sizes = np.zeros(count, dtype=int)
        for i, g in sorted(np.ndindex(dist.shape), key=lambda ig: (dist[ig], ig)):
            if new[i] < 0 and sizes[g] < cap:
                new[i] = g
                sizes[g] += 1
        # with cap = ceil(n/k) a group can still end up empty; hand it the closest spare point
        for g in range(count):
            if sizes[g] == 0:
                cand = [i for i in range(len(members)) if sizes[new[i]] > 1]
                pick = min(cand, key=lambda i: (dist[i, g], i))
                sizes[new[pick]] -= 1
                new[pick] = g
                sizes[g] = 1
        if np.array_equal(new, labels):
            break
        labels = new
        cent = np.array([pts[labels == g].mean(axis=0) for g in range(count)])

    groups = [tuple(m for m, lab in zip(members, labels) if lab == g) for g in range(count)]
    groups.sort(key=lambda g: g[0])
    return [SubCluster(i, cluster.cluster_id, g, strongest(g, cluster.nodes))
            for i, g in enumerate(groups)]


def _finish_cluster(cid: int, ids: list[int], positions, cpu, mem, node_bw, links, radius) -> Cluster:
    nodes = {}
    for i, n in enumerate(ids):
        own = [bw for (a, _), bw in links.items() if a == n]
        nic = max(own) if own else node_bw[i]
        nodes[n] = EdgeNode(n, (float(positions[i][0]), float(positions[i][1])),
                            Demand(float(cpu[i]), float(mem[i]), float(nic)))
    head = strongest(ids, nodes)
    return Cluster(cid, list(ids), head, links, nodes, radius)


def build_clusters(num_nodes: int, nodes_per_cluster: int, radius: float,
                   rng: np.random.Generator, area: float = 100.0) -> list[Cluster]:
    """Evaluation topology: consecutive node ids form clusters, capacities
    dealt round-robin from the container resource tiers."""
    if num_nodes <= 0 or nodes_per_cluster <= 0:
        raise ConfigError("node counts must be positive", key="num_nodes")
    clusters = []
    for cid, start in enumerate(range(0, num_nodes, nodes_per_cluster)):
        ids = list(range(start, min(start + nodes_per_cluster, num_nodes)))
        positions = rng.uniform(0.0, area, size=(len(ids), 2)) + np.array([cid * 10 * area, 0.0])
        mem = [MEM_TIERS[n % 5] for n in ids]
        cpu = [CPU_TIERS[n % 5] for n in ids]
        bw = [BW_TIERS[(n + 3) % 5] for n in ids]
        links = {}
        for i, a in enumerate(ids):
            for j, b in enumerate(ids):
                if a != b:
                    links[(a, b)] = min(bw[i], bw[j])
        clusters.append(_finish_cluster(cid, ids, positions, cpu, mem, bw, links, radius))
    return clusters


def random_cluster(rng: np.random.Generator, radius: float, area: float = 100.0,
                   size_range=(2, 10), cpu_range=(0.25, 1.0), mem_range=(64.0, 4096.0),
                   bw_range=(128.0, 1000.0)) -> Cluster:
    """Randomized cluster for offline pre-training."""
    n = int(rng.integers(size_range[0], size_range[1] + 1))
    ids = list(range(n))
    positions = rng.uniform(0.0, area, size=(n, 2))
    cpu = rng.uniform(*cpu_range, size=n)
    mem = rng.uniform(*mem_range, size=n)
    links = {}
    for a in ids:
        for b in ids:
            if a < b:
                links[(a, b)] = links[(b, a)] = float(rng.uniform(*bw_range))
    return _finish_cluster(0, ids, positions, cpu, mem, [bw_range[0]] * n, links, radius)
