"""
Four learners, one mission
==========================

The same four-drone team is trained under the four agent designs:

* instrumental_only          model-free Q-learning on the radio reward
* pavlovian_instrumental     plus a Pavlovian critic that biases actions and
                             shapes the reward once a cue has been met
* instrumental_model_based   model-free and Dyna-Q, mixed by arbitration
* full_hybrid                all three systems

Runs share seeds across conditions.  Termination here is the proximity rule
(four agents within four cells of the beacon with line of sight), which gives
shorter episodes than the PEB rule and keeps the demo short.
Output files land in ``demos/out/four_conditions``.

    python demos/four_conditions.py [episodes] [runs]
"""
import sys
from pathlib import Path

import numpy as np

from pavlovian_rl.env_grid import dump_map
from pavlovian_rl.experiment import ALL_CONDITIONS, RunConfig, Scenario, compare, episodes_to_criterion
from pavlovian_rl.io import emit_outputs
from pavlovian_rl.rf_channel import TerminationConfig

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 300
runs = int(sys.argv[2]) if len(sys.argv) > 2 else 6

config = RunConfig(episodes=episodes, monte_carlo_runs=runs, snapshot_episodes=(1, min(400, episodes)),
                   termination=TerminationConfig(mode="proximity"), smoothing_window=10)
results = compare(config, ALL_CONDITIONS)

print(f"{runs} runs x {episodes} episodes, mean steps per episode")
print(f"{'condition':26s} {'ep 1':>7s} {'ep 10':>7s} {'ep 50':>7s} {'last 10%':>9s} {'to 50%':>7s}")
for cond, agg in results.items():
    m = agg.mean_steps
    tail = m[-max(1, episodes // 10):].mean()
    etc = episodes_to_criterion(agg.steps).mean()
    print(f"{cond.value:26s} {m[0]:7.1f} {m[min(9, episodes - 1)]:7.1f} {m[min(49, episodes - 1)]:7.1f} "
          f"{tail:9.1f} {etc:7.1f}")

# "to 50%": first episode whose 20-episode moving average falls below half of
# the first episode's mean. Smaller is faster learning.

# arbitration: how much the model-based system is trusted as training goes on
for cond in ALL_CONDITIONS:
    if cond.model_based:
        p = np.array([[m.p_mb_mean for m in r.metrics] for r in results[cond].runs]).mean(axis=0)
        marks = [0, 9, 49, episodes - 1]
        print(f"p_mb {cond.value:26s} " + "  ".join(f"ep{e + 1}={p[e]:.2f}" for e in marks if e < episodes))

out = Path(__file__).resolve().parent / "out" / "four_conditions"
grid = Scenario.from_config(config).grid
files = emit_outputs(results, config, out, grid, dump_map(grid), command="compare")
print(f"\nwrote {len(files)} files to {out} (learning_curve.svg is the overview)")
