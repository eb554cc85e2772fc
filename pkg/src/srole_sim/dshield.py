"""Decentralized shielding: one shield per sub-cluster plus delegate sessions
for boundary overloads.

Placements are split by target node, so each local shield sees every layer
aimed at its members, whichever sub-cluster the agent sits in. A local
shield can only move layers inside its sub-cluster. A boundary overload it
cannot fix that way is left to a delegate session for each neighboring
pair containing that node. The delegate sees the boundary nodes of the pair
and may move the layers on the overloaded ones, possibly across the
boundary. It knows nothing beyond those boundary nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .actions import JointAction, Placement
from .errors import ContractViolation, ProtocolError
from .shield import ShieldCorrection, ShieldReport, ShieldScope, run_shield
from .topology import Cluster, Demand, SubCluster, load_utilization, RESOURCES

# two participants send their boundary state to the delegate, the delegate replies to both
MESSAGES_PER_SESSION = 4


@dataclass(frozen=True)
class BoundarySet:
    pair: tuple[int, int]
    nodes: frozenset[int]


def _owner(subclusters: Sequence[SubCluster]) -> dict[int, int]:
    return {n: s.subcluster_id for s in subclusters for n in s.members}


def boundary_sets(cluster: Cluster, subclusters: Sequence[SubCluster]) -> dict[tuple[int, int], BoundarySet]:
    """Boundary nodes of every neighboring sub-cluster pair (pairs with at least one cross edge)."""
    owner = _owner(subclusters)
    found: dict[tuple[int, int], set[int]] = {}
    for n in sorted(owner):
        for m in cluster.neighbors(n):
            if owner[m] != owner[n]:
                pair = tuple(sorted((owner[n], owner[m])))
                found.setdefault(pair, set()).update((n, m))
    return {p: BoundarySet(p, frozenset(v)) for p, v in sorted(found.items())}


def elect_delegate(shields, subclusters: Mapping[int, SubCluster], cluster: Cluster) -> int:
    """Shield whose host has the largest combined capacity; ties go to the lower shield id."""
    shields = sorted(shields)
    if not shields:
        raise ValueError("need at least one shield")
    return min(shields, key=lambda s: (-cluster.nodes[subclusters[s].shield_host].combined_capacity, s))


@dataclass
class DelegateSession:
    delegate: int
    participants: tuple[int, ...]
    boundary: BoundarySet
    actions: JointAction
    # node -> (capacity, committed load) reported by the participants
    availability: dict[int, tuple[Demand, Demand]]
    neighbors: dict[int, frozenset[int]]
    outcome: list[ShieldCorrection] = field(default_factory=list)
    report: ShieldReport | None = None

    def __post_init__(self):
        if self.delegate not in self.participants:
            raise ValueError("delegate must be a participant")


def delegate_pass(session: DelegateSession, alpha: float, kappa_unit: float = 100.0) -> list[ShieldCorrection]:
    """Centralized shield semantics over the boundary subgraph of the session.

    Raises ProtocolError when a participant failed to report a boundary node.
    """
    missing = sorted(set(session.boundary.nodes) - set(session.availability))
    stray = sorted(p.node for p in session.actions.values() if p.node not in session.boundary.nodes)
    if missing or stray:
        raise ProtocolError(f"session {session.boundary.pair}: incomplete exchange "
                            f"(missing {missing or stray})")
    nodes = sorted(session.boundary.nodes)
    scope = ShieldScope({n: session.availability[n][0] for n in nodes},
                        {n: session.availability[n][1] for n in nodes},
                        {n: session.neighbors[n] for n in nodes})
    session.report = run_shield(session.actions, scope, alpha, kappa_unit)
    session.outcome = list(session.report.corrections)
    return session.outcome


def local_shield_pass(subcluster: SubCluster, joint_local: JointAction, alpha: float,
                      kappa_unit: float = 100.0, cluster: Cluster | None = None,
                      base: Mapping[int, Demand] | None = None,
                      boundary: frozenset[int] = frozenset()) -> ShieldReport:
    """Centralized shield restricted to the sub-cluster's members and intra-sub-cluster edges.

    Overloads on ``boundary`` members that no local move fixes are left for
    the delegate sessions.
    """
    members = set(subcluster.members)
    for p in joint_local.values():
        if p.node not in members:
            raise ContractViolation(f"task {p.task} targets node {p.node} outside sub-cluster "
                                    f"{subcluster.subcluster_id}")
    if cluster is None:
        raise ValueError("local_shield_pass needs the parent cluster")
    scope = ShieldScope.of_cluster(cluster, members)
    if base is not None:
        scope.base = {n: base[n] for n in scope.nodes}
    return run_shield(joint_local, scope, alpha, kappa_unit, defer=frozenset(boundary) & members)


@dataclass
class RoundDetail:
    report: ShieldReport
    local: dict[int, ShieldReport]
    sessions: list[DelegateSession]
    aborted: list[tuple[int, int]]


def dshield_round_detail(cluster: Cluster, subclusters: Sequence[SubCluster], joint: JointAction,
                         alpha: float, kappa_unit: float = 100.0,
                         drop: Mapping[tuple[int, int], set[int]] | None = None) -> RoundDetail:
    """One decentralized shielding round.

    ``drop`` removes boundary nodes from a pair's exchange, to exercise the
    aborted-session path.
    """
    owner = _owner(subclusters)
    if set(owner) != set(cluster.members) or sum(len(s.members) for s in subclusters) != len(owner):
        raise ContractViolation("sub-clusters must partition the cluster")
    by_id = {s.subcluster_id: s for s in subclusters}

    parts: dict[int, list[Placement]] = {sid: [] for sid in by_id}
    for p in joint.values():
        parts[owner[p.node]].append(p)

    bsets = boundary_sets(cluster, subclusters)
    on_boundary = frozenset(n for b in bsets.values() for n in b.nodes)

    local: dict[int, ShieldReport] = {}
    final: dict[str, Placement] = {}
    corrections: list[ShieldCorrection] = []
    detected: set[int] = set()
    for sid in sorted(by_id):
        rep = local_shield_pass(by_id[sid], JointAction(parts[sid]), alpha, kappa_unit, cluster,
                                boundary=on_boundary)
        local[sid] = rep
        final.update(rep.corrected.items())
        corrections.extend(rep.corrections)
        detected |= rep.detected
    left_over = {n for r in local.values() for n, _ in r.unresolved}

    sessions: list[DelegateSession] = []
    aborted: list[tuple[int, int]] = []
    for pair, bset in bsets.items():
        movable = [p for p in final.values() if p.node in bset.nodes & left_over]
        if not movable:
            continue
        moving = {p.task for p in movable}
        committed = {n: cluster.nodes[n].load for n in bset.nodes}
        for q in final.values():
            if q.node in committed and q.task not in moving:
                committed[q.node] = committed[q.node] + q.demand
        dropped = set((drop or {}).get(pair, ()))
        avail = {n: (cluster.nodes[n].capacity, committed[n]) for n in sorted(bset.nodes) if n not in dropped}
        session = DelegateSession(elect_delegate(pair, by_id, cluster), pair, bset, JointAction(movable),
                                  avail, {n: cluster.neighbors(n) for n in bset.nodes})
        sessions.append(session)
        try:
            delegate_pass(session, alpha, kappa_unit)
        except ProtocolError:
            # aborted: placements stay where the local passes left them
            aborted.append(pair)
            continue
        final.update(session.report.corrected.items())
        corrections.extend(session.report.corrections)
        detected |= session.report.detected

    corrected = JointAction(final.values())
    scope = ShieldScope.of_cluster(cluster)
    proj = scope.project(corrected.values())
    unresolved = [(n, k) for n in scope.nodes
                  for k, u in zip(RESOURCES, load_utilization(proj[n], scope.caps[n])) if u > alpha]
    ops = max((r.ops for r in local.values()), default=0) + sum(session_ops(s) for s in sessions)
    report = ShieldReport(corrected, corrections, unresolved, len(detected), ops,
                          MESSAGES_PER_SESSION * len(sessions), len(sessions), frozenset(detected))
    return RoundDetail(report, local, sessions, aborted)


def session_ops(session: DelegateSession) -> int:
    """Delegate work (boundary records included) plus the session messages."""
    work = session.report.ops if session.report else len(session.actions) + len(session.availability)
    return work + MESSAGES_PER_SESSION


def dshield_round(cluster: Cluster, subclusters: Sequence[SubCluster], joint: JointAction,
                  alpha: float, kappa_unit: float = 100.0) -> ShieldReport:
    """Local passes per sub-cluster, then one delegate session per pair with a leftover boundary overload."""
    return dshield_round_detail(cluster, subclusters, joint, alpha, kappa_unit).report
