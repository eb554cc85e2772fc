"""One evaluation episode per scheduling method on the default 25-node setup.

The first call for each method pre-trains its Q-tables, so expect a few
seconds of warm-up.
"""
from srole_sim.config import SimConfig
from srole_sim.engine import run_episode

cfg = SimConfig()
print(f"{'method':8s} {'collisions':>10s} {'jct_mean':>10s} {'sched_ops':>10s} {'shield_ops':>10s}")
for method in ("rl", "marl", "srole-c", "srole-d"):
    r = run_episode(cfg, seed=0, method=method).record
    print(f"{method:8s} {r.collisions:10d} {r.jct_mean:10.1f} {r.sched_ops:10d} {r.shield_ops:10d}")

# srole-c and srole-d should show fewer collisions than marl; rl pays the most
# scheduling ops because every decision goes through the head node
