"""
Prompt tuning a frozen toy encoder
==================================

Train the shared context vectors on long-tailed base classes, with and
without the collapse regularizers, and watch the per-step diagnostics.
"""
import numpy as np

from nptlab import TrainConfig, evaluate, harmonic_mean, train
from nptlab.experiment import ExperimentConfig, prepare_cell

cell = prepare_cell(ExperimentConfig(), tau=0.01, seed=0)
print("train counts", cell.train_set.class_counts())

for method in ("baseline", "npt"):
    trained, traj = train(cell.params, cell.train_set, TrainConfig(method=method),
                          class_ids=cell.split.base_ids)
    print(f"\n{method}")
    for row in traj.rows[::5] + traj.rows[-1:]:
        print(f"  step {row['step']:3d} loss {row['loss_total']:.4f} lcd {row['delta_lcd']:.4f} "
              f"mid {row['mid_error']:.4f} head cohesion {row['cohesion_0']:.3f} "
              f"tail repulsion {row['repulsion_4']:.3f}")
    b = evaluate(trained, cell.test_base, cell.split.base_ids)
    n = evaluate(trained, cell.test_novel, cell.split.novel_ids)
    print(f"  base {b:.3f} novel {n:.3f} HM {harmonic_mean(b, n):.3f}")

# The trajectory is plain CSV
print(traj.to_csv().splitlines()[0][:120], "...")
