"""Generate synthetic gait data, train the branched network on one fold, inspect it.

Run from the repository root:  python demos/01_generate_and_train.py [epochs]

The generator samples closed-form ankle kinematics over twelve walking and
running speeds.  One cross-validation fold is enough to see the two-stage
network learn speed and phase first, then the ankle angle and rate.
"""

import sys

import numpy as np

from gaitsea.evalkit import angle_threshold_report, bucket_reports, text_summary
from gaitsea.gaitdata import DEFAULT_SPEEDS, cycle_duration, generate_dataset, kfold_split
from gaitsea.mlpnet import NetworkConfig, TrainHyper, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 40

# --- the data ---------------------------------------------------------------
ds = generate_dataset()
print(f"{len(ds)} samples, {len(DEFAULT_SPEEDS)} speeds")
for v in (0.5, 1.25, 3.0, 4.5):
    sel = ds.speed == v
    print(f"  {v:4.2f} m/s: cycle {cycle_duration(v):.2f} s, "
          f"ankle range {ds.final[sel, 0].min():6.1f} to {ds.final[sel, 0].max():5.1f} deg")

# --- one fold ---------------------------------------------------------------
plan = kfold_split(ds, k=5, validation_fraction=0.3, seed=0)
cfg = NetworkConfig()
print(f"\nnetwork: {cfg.hidden_per_stage} hidden layers of {cfg.hidden_width}, "
      f"phase encoding {cfg.phase_encoding!r}")


def progress(rec):
    if rec.epoch == 1 or rec.epoch % 10 == 0:
        print(f"  epoch {rec.epoch:3d}  train fin {rec.train_fin:9.3f}  val fin {rec.val_fin:9.3f}")


models, report = train(ds, plan, cfg, TrainHyper(epochs=epochs), folds=[0], on_epoch=progress)
model = models[0]
fold = report.fold_tests[0]
print(f"best epoch {fold.best_epoch}")

# --- held-out evaluation ------------------------------------------------------
test = ds.subset(model.test_indices)
pred = model.predict(test.imu)
print()
print(text_summary(fold.metrics, bucket_reports(pred, test.outputs),
                   angle_threshold_report(pred[:, 2], test.outputs[:, 2])), end="")

worst = np.argmax(np.abs(pred[:, 2] - test.outputs[:, 2]))
print(f"\nlargest angle miss: {pred[worst, 2]:.1f} vs {test.outputs[worst, 2]:.1f} deg "
      f"at {test.speed[worst]:.2f} m/s, phase {test.phase[worst]:.0f} %")
