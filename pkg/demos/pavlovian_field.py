"""
What the Pavlovian critic learns
================================

The Pavlovian system never sees the radio reward.  It only learns how good
each cell is with respect to the cues: +5 the first time a gate is entered,
-5 for entering a GPS-denied cell, -2 for every step out of line of sight of
the beacon.  After a few hundred episodes its state values v_pav form a map
with high ground at the gates and low ground away from the beacon.

This script trains the pavlovian_instrumental design for one seed, prints
v_pav for agent 1 at episodes 1 and 400, and compares the greedy final
routes of the Pavlovian team with a purely instrumental one.

    python demos/pavlovian_field.py
"""
import numpy as np

from pavlovian_rl.env_grid import CellKind
from pavlovian_rl.experiment import Condition, RunConfig, Scenario, run_training

config = RunConfig(episodes=400, monte_carlo_runs=1, condition=Condition.PAVLOVIAN_INSTRUMENTAL,
                   snapshot_episodes=(1, 400))
scenario = Scenario.from_config(config)
grid = scenario.grid
result = run_training(config, seed=0, scenario=scenario)


def show(field):
    """One character per cell: obstacles '#', then v_pav binned from low to high."""
    ramp = "0123456789"
    v = field[~np.isnan(field)]
    lo, hi = v.min(), v.max()
    for y in range(grid.height - 1, -1, -1):
        row = ""
        for x in range(grid.width):
            f = field[y, x]
            if np.isnan(f):
                row += "#"
            else:
                row += ramp[int((f - lo) / (hi - lo + 1e-12) * 9.999)]
        print(row)
    print(f"0 = {lo:.2f}, 9 = {hi:.2f}")


for ep in (1, 400):
    print(f"\nv_pav, agent 1, end of episode {ep}")
    show(result.snapshots[ep][0])

gate = [grid.state_index(c) for c in grid.cells_of_kind(CellKind.GATE)]
denied = [grid.state_index(c) for c in grid.cells_of_kind(CellKind.GPS_DENIED)]
print("\nmeans at episode 400   gate    global   denied")
for k, f in enumerate(result.snapshots[400], start=1):
    flat = f.reshape(-1)
    print(f"  agent {k}             {flat[gate].mean():6.2f}  {np.nanmean(f):7.2f}  {flat[denied].mean():7.2f}")

# Denied cells come out close to the global mean rather than far below it:
# once the agents have learned to avoid them they are rarely visited, and the
# -5 is charged to the move into the cell, i.e. to the neighbour's action.

# greedy routes: count the GPS-denied cells each team crosses
for cond in (Condition.PAVLOVIAN_INSTRUMENTAL, Condition.INSTRUMENTAL_ONLY):
    cfg = RunConfig(episodes=600, condition=cond, snapshot_episodes=(1,))
    paths = run_training(cfg, seed=0, scenario=scenario).trajectories
    crossings = [sum(grid.kind(c) == CellKind.GPS_DENIED for c in p) for p in paths]
    steps = len(paths[0]) - 1
    print(f"{cond.value:24s} greedy rollout {steps:3d} steps, GPS-denied cells per agent {crossings}")

# The Pavlovian team keeps out of the denied patches.  Its zero-temperature
# rollout can also run to the step limit: each agent acts on its own table,
# so two agents can block each other (one hovering in the cell the other
# wants), a deadlock that the softmax noise breaks during training.
