"""Two agents pick the same node and the shield steps in.

Run with ``python3 demos/01_shield_walkthrough.py``.
"""
from srole_sim.actions import JointAction, Placement
from srole_sim.shield import shield_step, virtual_assign
from srole_sim.topology import Cluster, Demand, EdgeNode

ALPHA = 0.9

# three 1-cpu / 1 GB nodes on a line; each one only sees its direct neighbors
ids = [0, 1, 2]
nodes = {n: EdgeNode(n, (float(n), 0.0), Demand(1.0, 1024.0, 100.0)) for n in ids}
nodes[2].assign("background", Demand(0.5, 600.0, 10.0))
links = {(a, b): 100.0 for a in ids for b in ids if a != b}
cluster = Cluster(0, ids, 0, links, nodes, radius=1.5)

# agent 0 and agent 1 independently choose node 1 for a 600 MB layer
joint = JointAction([
    Placement("conv1", 1, Demand(0.2, 600.0, 5.0), 0),
    Placement("fc1", 1, Demand(0.1, 600.0, 5.0), 1),
])

for n, u in virtual_assign(joint, cluster).items():
    print(f"before  node {n}: cpu {u[0]:.2f} mem {u[1]:.2f} bw {u[2]:.2f}")

report = shield_step(joint, cluster, ALPHA)
for c in report.corrections:
    print(f"moved {c.task}: node {c.original[1]} -> node {c.replacement[1]}, agent {c.penalized_agent} penalized")

for n, u in virtual_assign(report.corrected, cluster).items():
    print(f"after   node {n}: cpu {u[0]:.2f} mem {u[1]:.2f} bw {u[2]:.2f}")

# node 0 wins over node 2 because node 2 already carries background load
print("unresolved:", report.unresolved or "none")
