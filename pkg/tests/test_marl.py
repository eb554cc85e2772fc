import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from conftest import make_cluster
from srole_sim.actions import AssignmentAction, Placement, joint_action
from srole_sim.errors import ContractViolation, SchedulingError
from srole_sim.marl import (LEVELS, QTable, RewardParams, band, centralized_rl_schedule,
                            compute_reward, encode_state, epsilon_at, marl_schedule,
                            select_action, update_q, visible_order)
from srole_sim.topology import Demand, EdgeNode
from srole_sim.workload import LayerProfile, ModelPartitionGraph, TrainingJob, build_model_profile


def chain(n, cpu=0.02, mem=100.0, name="m"):
    layers = [LayerProfile(f"L{i}", i, cpu, mem, ((f"L{i + 1}", 8.0),) if i + 1 < n else ())
              for i in range(n)]
    return ModelPartitionGraph(name, tuple(layers), n)


def view(*caps):
    return [EdgeNode(i, (float(i), 0.0), Demand(*c)) for i, c in enumerate(caps)]


def test_band_boundaries():
    assert band(0.0, 0.0, 1.0) == 0
    assert band(1 / 3, 0.0, 1.0) == 1
    assert band(2 / 3, 0.0, 1.0) == 2
    assert band(1.0, 0.0, 1.0) == 2
    assert band(-5.0, 0.0, 1.0) == 0 and band(9.0, 0.0, 1.0) == 2


def test_zero_availability_reads_low():
    s = encode_state(chain(1), view((0.01, 1.0, 1.0)))
    assert s.names()[1][0] == ("low", "low", "low")


def test_equal_levels_give_equal_keys():
    a = encode_state(chain(2), view((1.0, 2048, 500), (0.9, 1900, 450)))
    assert a.nodes[0] == a.nodes[1]
    b = encode_state(chain(2), view((1.0, 2048, 500), (0.9, 1900, 450)))
    assert a.key == b.key
    assert all(v in range(len(LEVELS)) for t in a.layers + a.nodes for v in t)


def test_encode_needs_a_visible_node():
    with pytest.raises(SchedulingError):
        encode_state(chain(1), [])


def job(graph, origin=0, jid="j"):
    return TrainingJob(jid, origin, graph)


def test_uniform_exploration_chi_square():
    rng = np.random.default_rng(0)
    caps = [(1.0, 4096, 500)] * 3
    counts = {}
    for _ in range(10_000):
        d = select_action(QTable(), job(chain(2)), view(*caps), 1.0, rng)
        key = tuple(d.action.mapping.values())
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 9
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_forced_argmax():
    caps = [(1.0, 4096, 500), (0.1, 100, 20), (0.5, 600, 200)]
    g = chain(1)
    s = encode_state(g, view(*caps))
    q = QTable()
    # action key of slot 2: not co-located with the origin, slot 2 levels
    q.set(s.layers[0], (0, *s.nodes[2]), 100.0)
    for seed in range(20):
        d = select_action(q, job(g), view(*caps), 0.0, np.random.default_rng(seed))
        assert d.action.mapping == {"j/L0": 2}


def test_greedy_tie_goes_to_smallest_key():
    caps = [(1.0, 4096, 500), (0.1, 100, 20)]
    d = select_action(QTable(), job(chain(1)), view(*caps), 0.0, np.random.default_rng(1))
    # slot 1 has all-low levels and is not the origin, so its key (0, 0, 0, 0) is smallest
    assert d.action.mapping == {"j/L0": 1}
    same = select_action(QTable(), job(chain(1)), view(*caps), 0.0, np.random.default_rng(2))
    assert same.action.mapping == d.action.mapping


def test_select_rejects_bad_epsilon_and_empty_view():
    with pytest.raises(ContractViolation):
        select_action(QTable(), job(chain(1)), view((1, 1, 1)), 1.5, np.random.default_rng(0))
    with pytest.raises(SchedulingError):
        select_action(QTable(), job(chain(1)), [], 0.5, np.random.default_rng(0))


def test_later_levels_see_reduced_availability():
    caps = [(1.0, 1100, 500)]
    g = chain(2, mem=450.0)
    d = select_action(QTable(), job(g), view(*caps), 0.0, np.random.default_rng(0))
    # free mem 1100 -> high band before L0, 650 -> medium before L1
    assert d.steps[0].action[2] == 2 and d.steps[1].action[2] == 1


def test_reward_cases():
    p = RewardParams(rho=1.0, gamma_penalty=50.0, kappa_unit=100.0)
    out = lambda mv, c, o: SimpleNamespace(memory_violated=mv, shield_corrections=c, training_time=o)
    assert compute_reward(out(True, 3, 4.0), p) == -50.0
    assert compute_reward(out(False, 2, 4.0), p) == -200.0
    assert compute_reward(out(False, 0, 4.0), p) == 0.5
    with pytest.raises(ContractViolation):
        compute_reward(out(False, 0, 0.0), p)
    with pytest.raises(ValueError):
        RewardParams(kappa_unit=-100.0)


def test_update_examples():
    q = QTable()
    update_q(q, "s", "a", 5.0, None, 1.0, 0.0)
    assert q.get("s", "a") == 5.0

    q = QTable()
    update_q(q, "s", "a", 0.0, "s2", 0.1, 0.9)
    assert q.get("s", "a") == 0.0 and q.max_q("s") == 0.0

    q = QTable()
    q.set("s", "a", 1.0)
    q.set("n", "b", 2.0)
    update_q(q, "s", "a", 1.0, "n", 0.5, 0.9)
    assert q.get("s", "a") == pytest.approx(1.9)


def test_update_rejects_bad_inputs():
    with pytest.raises(ContractViolation):
        update_q(QTable(), "s", "a", math.inf, None, 0.1, 0.9)
    with pytest.raises(ContractViolation):
        update_q(QTable(), "s", "a", 1.0, None, 0.0, 0.9)
    with pytest.raises(ContractViolation):
        update_q(QTable(), "s", "a", 1.0, None, 0.1, 1.0)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.floats(-50.0, 1.0),
                          st.integers(0, 4)), min_size=1, max_size=300),
       st.floats(0.01, 1.0), st.floats(0.0, 0.99))
def test_q_values_stay_in_the_contraction_bounds(updates, lr, discount):
    q = QTable()
    lo, hi = -50.0 / (1 - discount), 1.0 / (1 - discount)
    for s, a, r, nxt in updates:
        update_q(q, s, a, r, None if nxt == 4 else nxt, lr, discount)
    for row in q.values.values():
        for v in row.values():
            assert lo - 1e-9 <= v <= hi + 1e-9


def test_snapshot_round_trip():
    q = QTable()
    q.set(((0, 1, 2),), (1, 2, 0, 1), -3.5)
    update_q(q, ((2, 2, 2),), (0, 0, 0, 0), 1.0, None, 0.1, 0.9)
    back = QTable.from_text(q.to_text())
    assert back == q and back.visits == q.visits
    with pytest.raises(ValueError):
        QTable.from_text('{"format": "other"}')


def test_qtable_rejects_non_finite():
    with pytest.raises(ContractViolation):
        QTable().set("s", "a", float("nan"))


def assignment(agent, *pairs):
    return AssignmentAction(agent, {t: Placement(t, n, Demand(0.1, 1, 1), agent) for t, n in pairs})


def test_joint_action_union():
    a = assignment(0, ("a/1", 0), ("a/2", 1), ("a/3", 1))
    b = assignment(1, ("b/1", 2), ("b/2", 2), ("b/3", 0))
    assert joint_action([a]).mapping == a.mapping
    j = joint_action([a, b])
    assert len(j) == 6
    assert joint_action([b, a]) == j
    with pytest.raises(ContractViolation):
        joint_action([a, assignment(2, ("a/1", 2))])


def test_assignment_matrix_rows_sum_to_one():
    a = assignment(0, ("x", 0), ("y", 2))
    m = a.matrix(["x", "y"], [0, 1, 2])
    assert m.tolist() == [[1, 0, 0], [0, 0, 1]]


def test_epsilon_schedule():
    assert epsilon_at(0, 100) == 1.0
    assert epsilon_at(30, 100) == pytest.approx(1.0 - 0.95 * 0.5)
    assert epsilon_at(60, 100) == 0.05 and epsilon_at(99, 100) == 0.05


def small_cluster(radius=math.inf, n=4, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 100, size=(n, 2))
    caps = [(0.3 + 0.2 * i, 1024.0 * (1 + i), 100.0 * (1 + i)) for i in range(n)]
    return make_cluster(pos, caps, radius)


def test_rl_on_single_node_cluster():
    c = make_cluster([(0, 0)], [(1.0, 4096, 100)])
    joint, _ = centralized_rl_schedule(QTable(), c, [job(chain(5))], 0.3, np.random.default_rng(0))
    assert set(joint.mapping.values()) == {0}


def test_rl_matches_marl_with_one_agent_and_full_view():
    c = small_cluster()
    g = build_model_profile("googlenet-like", 2)
    a, _ = centralized_rl_schedule(QTable(), c, [job(g, origin=1)], 0.4, np.random.default_rng(5))
    b, _ = marl_schedule({1: QTable()}, c, [job(g, origin=1)], 0.4, np.random.default_rng(5))
    assert a == b


def test_rl_ops_grow_with_jobs_and_outgrow_marl():
    c = small_cluster(radius=60.0, n=5, seed=2)
    g = build_model_profile("vgg16-like", 1)
    jobs = [job(g, origin=o, jid=f"j{o}") for o in (0, 1, 2)]
    _, rl = centralized_rl_schedule(QTable(), c, jobs, 0.0, np.random.default_rng(0))
    per_job = rl["j0"].ops
    # the head queues jobs, so the k-th job waits for k jobs' worth of work
    assert [rl[j.job_id].ops for j in jobs] == [per_job, 2 * per_job, 3 * per_job]
    _, marl = marl_schedule({n: QTable() for n in c.members}, c, jobs, 0.0, np.random.default_rng(0))
    rl_total = sum(d.ops for d in rl.values())
    marl_total = sum(d.ops for d in marl.values())
    assert rl_total > 2 * marl_total


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_every_layer_lands_on_one_visible_node(seed, eps):
    rng = np.random.default_rng(seed)
    c = small_cluster(radius=float(rng.uniform(0, 150)), n=int(rng.integers(1, 7)), seed=seed)
    g = build_model_profile("googlenet-like", seed % 1000)
    origins = rng.choice(c.members, size=min(3, len(c.members)), replace=False)
    jobs = [job(g, origin=int(o), jid=f"j{i}") for i, o in enumerate(origins)]
    joint, decisions = marl_schedule({n: QTable() for n in c.members}, c, jobs, eps, rng)
    assert len(joint) == sum(len(j.graph.layers) for j in jobs)
    for j in jobs:
        allowed = set(visible_order(c, j.origin))
        mapping = decisions[j.job_id].action.mapping
        assert set(mapping) == set(j.task_ids)
        assert set(mapping.values()) <= allowed


@given(st.integers(0, 2**32 - 1))
def test_greedy_choice_commutes_with_node_relabeling(seed):
    rng = np.random.default_rng(seed)
    n = 5
    pos = rng.uniform(0, 100, size=(n, 2))
    caps = rng.uniform([0.3, 512, 50], [1.0, 4096, 1000], size=(n, 3))
    perm = rng.permutation(n)
    a = make_cluster(pos, caps, 70.0)
    # node i of ``a`` becomes node perm[i] of ``b``
    inv = np.argsort(perm)
    b = make_cluster(pos[inv], caps[inv], 70.0)
    q = QTable()
    for _ in range(200):
        s = tuple(int(x) for x in rng.integers(0, 3, size=3))
        act = tuple(int(x) for x in rng.integers(0, 3, size=4))
        q.set(s, (int(rng.integers(0, 2)), *act[1:]), float(rng.normal()))
    g = build_model_profile("vgg16-like", seed % 100)
    origin = int(rng.integers(0, n))
    ja, _ = marl_schedule({origin: q}, a, [job(g, origin)], 0.0, np.random.default_rng(0))
    jb, _ = marl_schedule({int(perm[origin]): q}, b, [job(g, int(perm[origin]))], 0.0,
                          np.random.default_rng(0))
    assert {t: int(perm[v]) for t, v in ja.mapping.items()} == jb.mapping
