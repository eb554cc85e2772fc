"""Episode loop: topology and workload from seeds, scheduling, shielding,
realized load, the synthetic training-time model, rewards and metrics.

One episode runs one scheduling round per cluster. All jobs of a cluster
arrive together, are placed by the chosen method, optionally corrected by a
shield, and then run for ``iterations`` training iterations on the
resulting placement.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .actions import JointAction
from .config import SimConfig
from .dshield import dshield_round_detail, session_ops
from .errors import ContractViolation
from .marl import (QTable, RewardParams, centralized_rl_schedule, compute_reward,
                   epsilon_at, learn, marl_schedule)
from .metrics import MetricsRecord, aggregate, emit_aggregate, emit_csv
from .shield import ShieldReport, shield_step
from .topology import (ZERO, Cluster, Demand, build_clusters, load_utilization,
                       partition_subclusters, random_cluster)
from .workload import (BackgroundJob, ModelPartitionGraph, TrainingJob, background_demand,
                       build_model_profile, layer_demand, spawn_background)

SHIELDED = ("srole-c", "srole-d")
STREAMS = ("topology", "workload", "noise", "policy")


def estimate_training_time(schedule, model: ModelPartitionGraph, cluster: Cluster,
                           background: Iterable[BackgroundJob] = (), iterations: int = 50, *,
                           job_id: str | None = None, unit_time: float = 10.0,
                           param_size_mb: float = 100.0, t: float = 0.0) -> float:
    """Simulated seconds to run ``iterations`` training iterations.

    ``schedule`` maps layer ids (or ``job_id/layer_id`` task ids) to nodes.
    CPU load on a host is its committed load, plus ``background`` jobs, plus
    any scheduled layer not yet committed there.
    """
    mapping = dict(schedule.mapping if isinstance(schedule, JointAction) else schedule)
    prefix = f"{job_id}/" if job_id is not None else ""
    host = {}
    for layer in model.layers:
        key = prefix + layer.layer_id
        if key not in mapping:
            raise ContractViolation(f"schedule misses layer {key}")
        node = mapping[key]
        if node not in cluster.nodes:
            raise ContractViolation(f"layer {key} mapped to unknown node {node}")
        host[layer.layer_id] = node

    background = list(background)
    slow = {}
    for n in set(host.values()):
        node = cluster.nodes[n]
        extra = sum((layer_demand(l) for l in model.layers
                     if host[l.layer_id] == n and prefix + l.layer_id not in node.assigned), ZERO)
        load = node.load + background_demand(background, n, t) + extra
        # oversubscribed resources are shared proportionally
        slow[n] = tuple(max(1.0, u) for u in load_utilization(load, node.capacity))

    per_iter = 0.0
    for lvl in range(model.num_levels):
        layers = model.level(lvl)
        compute = max(l.cpu_demand * unit_time * slow[host[l.layer_id]][0] * slow[host[l.layer_id]][1]
                      for l in layers)
        transfer = max((size / cluster.bandwidth(host[l.layer_id], host[s])
                        * max(slow[host[l.layer_id]][2], slow[host[s]][2])
                        for l in layers for s, size in l.successors
                        if host[l.layer_id] != host[s]), default=0.0)
        per_iter += compute + transfer
    first = {host[l.layer_id] for l in model.level(0)}
    per_iter += max((param_size_mb / cluster.bandwidth(n, cluster.head) for n in first
                     if n != cluster.head), default=0.0)
    return iterations * per_iter


@dataclass(frozen=True)
class TaskOutcome:
    """What a single layer's reward depends on."""
    memory_violated: bool
    shield_corrections: int
    training_time: float


@dataclass
class ScheduleOutcome:
    job_id: str
    cluster_id: int
    schedule: JointAction
    training_time: float
    memory_violated: bool
    shield_corrections: int
    collisions: int
    task_counts: dict[int, int]
    utilization: dict[int, tuple[float, float, float]]

    def __post_init__(self):
        if not (self.training_time > 0 or self.memory_violated):
            raise ContractViolation("training time must be positive")
        if min(self.shield_corrections, self.collisions) < 0:
            raise ContractViolation("counts must be non-negative")


@dataclass
class Policy:
    """Pre-trained agents: one table for the cluster head (rl) or a shared
    template copied to every node agent (the other methods)."""
    method: str
    table: QTable
    episodes: int = 0

    def agents(self, members: Iterable[int]) -> dict[int, QTable]:
        return {n: self.table.copy() for n in members}


@dataclass
class RoundResult:
    outcomes: list[ScheduleOutcome]
    sched_ops: int
    shield_ops: int
    detections: int
    corrections: int
    unresolved: int
    messages: int
    nodes: dict[int, Demand]
    caps: dict[int, Demand]
    tasks: dict[int, int]


def _subclusters(cluster: Cluster, count: int):
    return partition_subclusters(cluster, min(count, len(cluster.members)))


def play_round(cfg: SimConfig, method: str, cluster: Cluster, jobs: Sequence[TrainingJob],
               tables: dict[int, QTable] | QTable, epsilon: float, rng: np.random.Generator,
               noise: Mapping[str, float], learn_now: bool = True) -> RoundResult:
    """Schedule, shield, commit and score one batch of jobs on ``cluster``.

    ``cluster`` already holds background load and is mutated by the commit.
    """
    if method == "rl":
        joint, decisions = centralized_rl_schedule(tables, cluster, jobs, epsilon, rng)
    else:
        joint, decisions = marl_schedule(tables, cluster, jobs, epsilon, rng)
    sched_ops = sum(d.ops for d in decisions.values())

    report: ShieldReport | None = None
    shield_ops = 0
    if method == "srole-c":
        report = shield_step(joint, cluster, cfg.alpha, cfg.kappa_unit)
        # every job waits for the full cluster-wide pass
        shield_ops = report.ops * len(jobs)
    elif method == "srole-d":
        subs = _subclusters(cluster, cfg.subclusters_per_cluster)
        detail = dshield_round_detail(cluster, subs, joint, cfg.alpha, cfg.kappa_unit)
        report = detail.report
        shield_ops = sum(_dshield_wait(detail, subs, joint, job.task_ids) for job in jobs)
    final = report.corrected if report else joint
    penalties = report.penalties() if report else {}

    for p in final.values():
        cluster.nodes[p.node].assign(p.task, p.demand.scaled(1.0 + noise.get(p.task, 0.0)))
    util = {n: load_utilization(cluster.nodes[n].load, cluster.nodes[n].capacity)
            for n in cluster.members}
    collisions = sum(1 for u in util.values() if max(u) > cfg.alpha)
    counts = {n: len(cluster.nodes[n].assigned) for n in cluster.members}

    params = RewardParams(cfg.rho, cfg.gamma_penalty, cfg.kappa_unit)
    outcomes = []
    for job in jobs:
        sched = final.subset(job.task_ids)
        o = estimate_training_time(sched, job.graph, cluster, (), cfg.iterations, job_id=job.job_id,
                                   unit_time=cfg.unit_time, param_size_mb=cfg.param_size_mb)
        mem_bad = {t: util[p.node][1] > 1.0 for t, p in sched.items()}
        c_job = sum(penalties.get(t, 0) for t in sched)
        outcomes.append(ScheduleOutcome(job.job_id, cluster.cluster_id, sched, o, any(mem_bad.values()),
                                        c_job, collisions, counts, util))
        if learn_now:
            rewards = {t: compute_reward(TaskOutcome(mem_bad[t], penalties.get(t, 0), o), params)
                       for t in sched}
            agent = tables if method == "rl" else tables[job.origin]
            learn(agent, decisions[job.job_id].steps, rewards, cfg.learn_rate, cfg.discount)

    return RoundResult(outcomes, sched_ops, shield_ops,
                       report.collision_count if report else 0,
                       len(report.corrections) if report else 0,
                       len({n for n, _ in report.unresolved}) if report else 0,
                       report.messages if report else 0,
                       {n: cluster.nodes[n].load for n in cluster.members},
                       {n: cluster.nodes[n].capacity for n in cluster.members}, counts)


def _dshield_wait(detail, subclusters, joint: JointAction, tasks: Sequence[str]) -> int:
    """Shield ops one job waits for: the local passes of the sub-clusters its
    layers target, then the delegate sessions up to the last one that holds
    one of its layers. Layers outside every session are final after the
    local passes."""
    owner = {n: s.subcluster_id for s in subclusters for n in s.members}
    local = max(detail.local[owner[joint[t].node]].ops for t in tasks)
    mine = set(tasks)
    elapsed, waited = 0, 0
    for s in detail.sessions:
        elapsed += session_ops(s)
        if mine & set(s.actions):
            waited = elapsed
    return local + waited


def _stream_seeds(*entropy: int) -> dict[str, int]:
    children = np.random.SeedSequence(list(entropy)).spawn(len(STREAMS))
    return {name: int(c.generate_state(1)[0]) for name, c in zip(STREAMS, children)}


def _origins(rng: np.random.Generator, members: Sequence[int], count: int) -> list[int]:
    return sorted(int(x) for x in rng.choice(members, size=min(count, len(members)), replace=False))


def _load_background(cluster: Cluster, level: int, seed: int, prefix: str) -> list[BackgroundJob]:
    # round-robin starting from the strongest node
    order = sorted(cluster.members, key=lambda n: (-cluster.nodes[n].combined_capacity, n))
    jobs = spawn_background(order, level, seed, prefix=prefix)
    for b in jobs:
        cluster.nodes[b.host].assign(b.job_id, b.demand)
    return jobs


def _noise(rng: np.random.Generator, jobs: Sequence[TrainingJob], level: float) -> dict[str, float]:
    tasks = sorted(t for j in jobs for t in j.task_ids)
    draws = rng.uniform(-level, level, size=len(tasks)) if level > 0 else np.zeros(len(tasks))
    return dict(zip(tasks, draws.tolist()))


_PRETRAIN_KEYS = ("model_kind", "radius", "alpha", "rho", "gamma_penalty", "kappa_unit",
                  "jobs_per_cluster", "iterations", "learn_rate", "discount", "epsilon_start",
                  "epsilon_end", "epsilon_fraction", "pretrain_episodes", "demand_noise",
                  "unit_time", "param_size_mb", "policy_seed", "subclusters_per_cluster")
_cache: dict[tuple, Policy] = {}


def pretrain(cfg: SimConfig, method: str | None = None, episodes: int | None = None) -> Policy:
    """Offline training on randomized clusters; cached per (relevant config, method)."""
    method = method or cfg.method
    episodes = cfg.pretrain_episodes if episodes is None else episodes
    # kappa and the sub-cluster split never reach the unshielded learners
    unused = () if method in SHIELDED else ("kappa_unit", "subclusters_per_cluster")
    key = (method, episodes, *(None if k in unused else getattr(cfg, k) for k in _PRETRAIN_KEYS))
    if key in _cache:
        return _cache[key]
    seeds = _stream_seeds(cfg.policy_seed, 0x5EED)
    topo_rng = np.random.default_rng(seeds["topology"])
    work_rng = np.random.default_rng(seeds["workload"])
    noise_rng = np.random.default_rng(seeds["noise"])
    rng = np.random.default_rng(seeds["policy"])
    table = QTable()
    for ep in range(episodes):
        cluster = random_cluster(topo_rng, cfg.radius)
        level = int(work_rng.integers(0, 7))
        _load_background(cluster, level, int(work_rng.integers(2**31)), "bg")
        origins = _origins(work_rng, cluster.members, cfg.jobs_per_cluster)
        jobs = [TrainingJob(f"p{ep}j{i}", o, build_model_profile(cfg.model_kind, int(work_rng.integers(2**31))))
                for i, o in enumerate(origins)]
        eps = epsilon_at(ep, episodes, cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_fraction)
        # every node agent shares one table while pre-training
        tables = table if method == "rl" else {n: table for n in cluster.members}
        play_round(cfg, method, cluster, jobs, tables, eps, rng, _noise(noise_rng, jobs, cfg.demand_noise))
    policy = Policy(method, table, episodes)
    _cache[key] = policy
    return policy


@dataclass
class Episode:
    outcomes: list[ScheduleOutcome]
    record: MetricsRecord


def _infeasible(cluster: Cluster, jobs: Sequence[TrainingJob], alpha: float) -> bool:
    need = sum((layer_demand(l) for j in jobs for l in j.graph.layers), Demand(0.0, 0.0, 0.0))
    load = sum((cluster.nodes[n].load for n in cluster.members), Demand(0.0, 0.0, 0.0))
    cap = sum((cluster.nodes[n].capacity for n in cluster.members), Demand(0.0, 0.0, 0.0))
    biggest = max(cluster.nodes[n].capacity.mem for n in cluster.members)
    return (any((need[i] + load[i]) > alpha * cap[i] for i in range(2))
            or any(l.mem_demand > biggest for j in jobs for l in j.graph.layers))


def run_episode(cfg: SimConfig, seed: int, method: str | None = None,
                policy: Policy | None = None) -> Episode:
    """One evaluation episode; deterministic in (cfg, seed)."""
    method = method or cfg.method
    if method != cfg.method:
        cfg = cfg.replace(method=method)
    policy = policy or pretrain(cfg, method)
    seeds = _stream_seeds(cfg.base_seed, seed)
    clusters = build_clusters(cfg.num_nodes, cfg.nodes_per_cluster, cfg.radius,
                              np.random.default_rng(seeds["topology"]))
    work_rng = np.random.default_rng(seeds["workload"])
    noise_rng = np.random.default_rng(seeds["noise"])
    rng = np.random.default_rng(seeds["policy"])

    outcomes: list[ScheduleOutcome] = []
    rounds: list[RoundResult] = []
    infeasible = False
    for cluster in clusters:
        _load_background(cluster, cfg.workload_level, int(work_rng.integers(2**31)), f"c{cluster.cluster_id}bg")
        origins = _origins(work_rng, cluster.members, cfg.jobs_per_cluster)
        jobs = [TrainingJob(f"c{cluster.cluster_id}j{i}", o,
                            build_model_profile(cfg.model_kind, int(work_rng.integers(2**31))))
                for i, o in enumerate(origins)]
        noise = _noise(noise_rng, jobs, cfg.demand_noise)
        infeasible |= _infeasible(cluster, jobs, cfg.alpha)
        tables = policy.table.copy() if method == "rl" else policy.agents(cluster.members)
        r = play_round(cfg, method, cluster, jobs, tables, cfg.eval_epsilon, rng, noise)
        rounds.append(r)
        outcomes.extend(r.outcomes)

    return Episode(outcomes, _record(cfg, method, seed, outcomes, rounds, infeasible))


def _record(cfg: SimConfig, method: str, seed: int, outcomes: list[ScheduleOutcome],
            rounds: list[RoundResult], infeasible: bool) -> MetricsRecord:
    times = [o.training_time for o in outcomes]
    counts = [c for r in rounds for c in r.tasks.values()]
    utils = np.array([load_utilization(r.nodes[n], r.caps[n]) for r in rounds for n in r.nodes])
    sched = sum(r.sched_ops for r in rounds)
    shield = sum(r.shield_ops for r in rounds)
    return MetricsRecord(
        method=method, seed=seed, workload_level=cfg.workload_level, num_nodes=cfg.num_nodes,
        model_kind=cfg.model_kind, kappa_unit=cfg.kappa_unit,
        jct_mean=float(np.mean(times)), jct_max=float(np.max(times)),
        jct_per_job=tuple(times),
        tasks_min=int(min(counts)), tasks_median=float(np.median(counts)), tasks_max=int(max(counts)),
        util_cpu=float(utils[:, 0].mean()), util_mem=float(utils[:, 1].mean()),
        util_bw=float(utils[:, 2].mean()),
        sched_ops=sched, shield_ops=shield, decision_time=(sched + shield) / cfg.ops_per_sec,
        collisions=sum(o.collisions for o in {o.cluster_id: o for o in outcomes}.values()),
        detections=sum(r.detections for r in rounds),
        corrections=sum(r.corrections for r in rounds),
        unresolved=sum(r.unresolved for r in rounds),
        messages=sum(r.messages for r in rounds),
        memory_violations=sum(1 for o in outcomes if o.memory_violated),
        infeasible=int(infeasible),
    )


def _campaign_task(args):
    cfg, seed = args
    return run_episode(cfg, seed).record


def worker_count() -> int:
    raw = os.environ.get("SROLE_SIM_THREADS")
    cap = int(raw) if raw and raw.isdigit() and int(raw) > 0 else (os.cpu_count() or 1)
    return max(1, cap)


def run_campaign(configs: Sequence[SimConfig], replications: int, out_dir=None,
                 workers: int | None = None) -> tuple[list[MetricsRecord], list[dict]]:
    """Run every config for seeds ``0..replications-1``; write raw.csv and aggregate.csv when
    ``out_dir`` is given."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    tasks = [(cfg, seed) for cfg in configs for seed in range(replications)]
    workers = min(workers or worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_campaign_task, tasks))
    else:
        records = [_campaign_task(t) for t in tasks]
    table = aggregate(records)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            emit_csv(records, out / "raw.csv")
            emit_aggregate(table, out / "aggregate.csv")
        except OSError as e:
            raise OSError(f"writing results for {len(configs)} grid point(s) to {out} failed: {e}") from e
    return records, table
