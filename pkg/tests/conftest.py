import math
import re

import pytest
from hypothesis import HealthCheck, settings

from srole_sim.actions import JointAction, Placement
from srole_sim.topology import Cluster, Demand, EdgeNode

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_cluster(positions, caps, radius=math.inf, loads=None, bw=100.0, cluster_id=0, head=None):
    """Cluster over ids 0..n-1 with every pair linked at ``bw``.

    ``caps`` and ``loads`` hold (cpu, mem, bw) triples; a load becomes one
    pre-existing task named ``pre<n>``.
    """
    ids = list(range(len(positions)))
    nodes = {n: EdgeNode(n, tuple(map(float, positions[n])), Demand(*map(float, caps[n]))) for n in ids}
    for n, load in enumerate(loads or []):
        if load is not None and any(load):
            nodes[n].assign(f"pre{n}", Demand(*map(float, load)))
    links = {(a, b): float(bw) for a in ids for b in ids if a != b}
    return Cluster(cluster_id, ids, ids[0] if head is None else head, links, nodes, radius)


def joint(*placements):
    """JointAction from (task, node, (cpu, mem, bw)[, agent]) tuples."""
    out = []
    for p in placements:
        task, node, demand, *agent = p
        out.append(Placement(task, node, Demand(*map(float, demand)), agent[0] if agent else 0))
    return JointAction(out)


@pytest.fixture
def line3():
    """Three collinear nodes at x = 0, 1, 2 with 1 cpu / 1024 MB / 100 MBps each."""
    return make_cluster([(0, 0), (1, 0), (2, 0)], [(1.0, 1024.0, 100.0)] * 3, radius=1.5)


# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, str]] = {}
_NAME = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    n = int(m.group(1))
    label = m.group(2).replace("_", " ")
    if report.when == "call" or report.failed:
        prev = _CRITERIA.get(n, (label, "PASS"))[1]
        status = "FAIL" if report.failed or prev == "FAIL" else "PASS"
        if report.skipped:
            status = "SKIP"
        _CRITERIA[n] = (label, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        label, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {label}")
