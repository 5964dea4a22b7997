"""A cut-down version of the full method comparison, done in about a minute.

Two trials, three methods, 32x32. The full protocol (10 trials, all seven
methods, 64x64) runs via `spiral run` or `run_experiment(ExperimentConfig())`
and takes around twenty minutes.
"""

import numpy as np

from spiral.harness import ExperimentConfig, MethodSpec, run_experiment

config = ExperimentConfig(
    side=32,
    n_angles=30,
    n_radial=32,
    target_counts=5e4,
    seed=9,
    n_trials=2,
    min_iter=30,
    max_iter=60,
    methods=(
        MethodSpec(name="l1-loose", penalty="l1w",
                   tau_grid=(0.2, 0.6, 1.8), sub="loose"),
        MethodSpec(name="tv-loose-mono", penalty="tv",
                   tau_grid=(0.1, 0.3, 0.9), sub="loose"),
        MethodSpec(name="rdp", penalty="rdp",
                   tau_grid=(0.3, 1.0, 3.0), sub="loose"),
    ),
)

result = run_experiment(config, "demo-sweep", progress=print)

print("\nper-method means over trials:")
for name in sorted({r.method for r in result.rows}):
    rows = [r for r in result.rows if r.method == name]
    rmse = np.mean([r.rmse_percent for r in rows])
    wall = np.mean([r.wall_seconds for r in rows])
    print(f"  {name:14s} rmse {rmse:6.2f}%  wall {wall:5.2f}s  "
          f"best tau {[r.tau for r in rows]}")
print(f"\ninitialization rmse per trial: "
      f"{[f'{v:.1f}%' for v in result.init_rmse]}")
print("outputs (summary.csv, traces, images) in demo-sweep/")
