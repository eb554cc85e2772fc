"""Decentralized shielding: local passes first, a delegate session only at the border.

Two sub-clusters of three nodes sit on a line. Nodes 2 and 3 are the only
pair that can see across the gap.
"""
from srole_sim.actions import JointAction, Placement
from srole_sim.dshield import boundary_sets, dshield_round_detail
from srole_sim.topology import Cluster, Demand, EdgeNode, partition_subclusters

ALPHA = 0.9
xs = [0.0, 1.0, 2.0, 3.2, 4.2, 5.2]
ids = list(range(len(xs)))
nodes = {n: EdgeNode(n, (x, 0.0), Demand(1.0, 1024.0, 100.0)) for n, x in zip(ids, xs)}
nodes[4].assign("background", Demand(0.5, 900.0, 10.0))
links = {(a, b): 100.0 for a in ids for b in ids if a != b}
cluster = Cluster(0, ids, 0, links, nodes, radius=1.25)

subs = partition_subclusters(cluster, 2)
print("sub-clusters:", [s.members for s in subs])
print("boundary nodes:", {k: sorted(v.nodes) for k, v in boundary_sets(cluster, subs).items()})


def show(title, joint):
    d = dshield_round_detail(cluster, subs, joint, ALPHA)
    moves = [(c.task, c.original[1], c.replacement[1]) for c in d.report.corrections]
    print(f"{title}: moves {moves}, sessions {len(d.sessions)}, messages {d.report.messages}")


# collision on interior node 0: the left shield fixes it alone
show("interior", JointAction([Placement("a", 0, Demand(0.2, 600.0, 5.0), 0),
                              Placement("b", 0, Demand(0.1, 600.0, 5.0), 1)]))

# collision on node 3 while node 4 is nearly full: only node 2 across the gap has room
show("boundary", JointAction([Placement("a", 3, Demand(0.2, 600.0, 5.0), 2),
                              Placement("b", 3, Demand(0.1, 600.0, 5.0), 3)]))
