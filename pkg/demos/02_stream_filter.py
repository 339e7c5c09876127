"""Stream a walking trace through a network and the Lipschitz output filter.

Run from the repository root:  python demos/02_stream_filter.py

A small network trained for a few epochs is plenty to show the filter at
work.  One percent of the ankle-angle ticks get a 40 degree impulse; the
filter clamps each one to the rate bound learned from the training data.
"""

import numpy as np

from gaitsea.gaitdata import generate_dataset, kfold_split
from gaitsea.mlpnet import NetworkConfig, TrainHyper, train
from gaitsea.rtpipe import LipschitzBounds, estimate_lipschitz_bounds, lipschitz_excess, run_stream

ds = generate_dataset(cycles_per_speed=10)
plan = kfold_split(ds, 5, 0.3, 0)
(model,), _ = train(ds, plan, NetworkConfig(), TrainHyper(epochs=15), folds=[0])

bounds = estimate_lipschitz_bounds(ds)
print("rate bounds (per second):")
for name, b in bounds.as_dict().items():
    print(f"  {name:7s} {b:10.3f}")
# every trial runs at one speed, so the speed bound sits on the floor

trace = generate_dataset([1.2], 10, seed=11)
n = len(trace)
rng = np.random.default_rng(0)
corrupt = np.zeros((n, 4))
hit = rng.choice(n, n // 100, replace=False)
corrupt[hit, 2] = 40.0 * rng.choice([-1.0, 1.0], hit.size)

clean = run_stream(model.network, model.normalizer, trace, bounds)
dirty = run_stream(model.network, model.normalizer, trace, bounds, corrupt=corrupt)

# with the speed bound on its floor, any jitter in the network's speed estimate
# is clamped even on a clean trace; phase and angle are clamped only rarely
print(f"\nclean stream, clamped ticks per output: {clean.clamped.sum(axis=0)}")
generous = run_stream(model.network, model.normalizer, trace, LipschitzBounds(np.full(4, 1e9)))
print(f"generous bounds leave the stream untouched: {np.array_equal(generous.filtered, generous.raw)}")
truth = clean.raw[:, 2]
for label, series in (("unfiltered", dirty.raw[:, 2]), ("filtered", dirty.filtered[:, 2])):
    print(f"{label:>10} angle RMSE vs clean stream: {np.sqrt(np.mean((series - truth) ** 2)):.3f} deg")
print(f"corrupted stream, clamped ticks per output: {dirty.clamped.sum(axis=0)}")
print(f"cone excess after filtering: {lipschitz_excess(dirty.time, dirty.filtered, bounds, dirty.reacquired):.1e}")

i = int(hit[0])
print(f"\nimpulse at tick {i}:")
for j in range(max(i - 2, 0), min(i + 3, n)):
    print(f"  t={dirty.time[j]:.2f}s raw {dirty.raw[j, 2]:7.2f}  filtered {dirty.filtered[j, 2]:7.2f}")
print(f"\nlatency per tick: mean {dirty.latency_us.mean():.0f} us, max {dirty.latency_us.max():.0f} us")
