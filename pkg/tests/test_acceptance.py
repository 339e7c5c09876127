"""Acceptance criteria on the default synthetic dataset and default seeds.

The full cross-validated training run is shared by criteria 2 to 6 and takes
several minutes on a single core.
"""

import time

import numpy as np
import pytest
from scipy import stats

from gaitsea.doestats import DoeTable, correlation_report, pearson, shapiro_wilk, spearman
from gaitsea.errors import FormatError
from gaitsea.evalkit import PHASE_PERIODS, angle_threshold_report, average_metrics, bucket_reports, regression_metrics
from gaitsea.gaitdata import generate_dataset, kfold_split, parse_dataset_csv, write_dataset_csv
from gaitsea.mlpnet import NetworkConfig, TrainHyper, backward, deserialize_network, serialize_network, train
from gaitsea.plantsim import (
    DEG,
    ActuatorParams,
    PlantState,
    SpringStack,
    mech_power,
    reference_trace,
    run_tracking,
    sea_energy,
    sea_torque,
    simulate_open_loop,
    torque_from_current,
)
from gaitsea.rtpipe import LipschitzBounds, estimate_lipschitz_bounds, filter_trace, lipschitz_excess, run_stream
from test_doestats import SW_VECTORS, _brute_pearson, _brute_ranks
from test_mlpnet import max_rel_error, numeric_grads, random_small_network


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset()


@pytest.fixture(scope="module")
def trained(dataset):
    plan = kfold_split(dataset, 5, 0.30, 0)
    t0 = time.perf_counter()
    models, report = train(dataset, plan, NetworkConfig(), TrainHyper())
    return models, report, plan, time.perf_counter() - t0


@pytest.fixture(scope="module")
def pooled(dataset, trained):
    models, _, plan, _ = trained
    preds, targs, per_fold = [], [], []
    for m in models:
        test = dataset.subset(plan.split(m.fold)[2])
        p = m.predict(test.imu)
        preds.append(p)
        targs.append(test.outputs)
        per_fold.append(regression_metrics(p, test.outputs, periods=PHASE_PERIODS))
    return np.vstack(preds), np.vstack(targs), average_metrics(per_fold)


def test_c01_gradient_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        net, x, tm, tf, lm, lf = random_small_network(seed)
        assert max(w.shape[0] for w in net.weights[:-1]) <= 8
        grads, _ = backward(net, x, tm, tf, lm, lf)
        worst = max(worst, max_rel_error(grads, numeric_grads(net, x, tm, tf, lm, lf)))
    secs = time.perf_counter() - t0
    verdict(1, "gradient oracle", worst < 1e-4 and secs < 30,
            f"max rel err {worst:.2e} over 20 networks in {secs:.1f} s")


def test_c02_ci_profile_trend(verdict, dataset):
    plan = kfold_split(dataset, 5, 0.30, 0)
    _, report = train(dataset, plan, NetworkConfig(), TrainHyper(epochs=20), folds=[0])
    loss = np.array([r.train_fin for r in report.records])
    rho = stats.spearmanr(np.arange(loss.size), loss).statistic
    ok = rho <= -0.8 and loss[-1] < loss[0]
    verdict(2, "training CI profile (20 epochs)", ok,
            f"train fin {loss[0]:.4g} -> {loss[-1]:.4g}, epoch/loss Spearman {rho:.3f}")


def test_c02_training_convergence(verdict, trained):
    _, report, _, total = trained
    ratios, gaps, fold_secs = [], [], []
    for t in report.fold_tests:
        recs = report.fold_records(t.fold)
        ratios.append(recs[0].train_fin / recs[-1].train_fin)
        best = recs[t.best_epoch - 1]
        gaps.append(best.val_fin / best.train_fin)
        fold_secs.append(sum(r.seconds for r in recs))
    ok = min(ratios) >= 10 and max(gaps) <= 2 and max(fold_secs) < 300
    verdict(2, "training convergence", ok,
            f"loss drop min {min(ratios):.1f}x, best-epoch val/train max {max(gaps):.2f}, "
            f"200-epoch run max {max(fold_secs):.0f} s (5 folds {total:.0f} s)")


def test_c03_held_out_metrics(verdict, pooled):
    _, _, m = pooled
    r = {d: m[d].rmse for d in ("v", "p", "alpha", "dalpha")}
    ok = r["v"] <= 0.5 and r["p"] <= 4 and r["alpha"] <= 6 and r["dalpha"] <= 60
    verdict(3, "held-out RMSE", ok,
            f"V {r['v']:.3f} m/s, P {r['p']:.3f} %, alpha {r['alpha']:.3f} deg, dalpha {r['dalpha']:.2f} deg/s")


def test_c04_bucket_targets(verdict, pooled):
    pred, targ, _ = pooled
    phase = {b.dimension: b for b in bucket_reports(pred, targ)}["p"]
    angle = angle_threshold_report(pred[:, 2], targ[:, 2])
    p5, p10 = phase.fraction_within(0.05), phase.fraction_within(0.10)
    a10 = angle.above.fraction_within(0.10)
    verdict(4, "bucket targets", p5 >= 0.70 and p10 >= 0.84 and a10 >= 0.87,
            f"phase within 5% {p5:.3f}, within 10% {p10:.3f}; |alpha|>15 within 10% {a10:.3f}")


def _stream_inputs(dataset, trained):
    models, *_ = trained
    model = models[0]
    bounds = estimate_lipschitz_bounds(dataset.subset(np.setdiff1d(np.arange(len(dataset)), model.test_indices)))
    trace = generate_dataset([1.2], 10, 100.0, seed=7)
    return model, bounds, trace


def test_c05_filter_efficacy(verdict, dataset, trained):
    model, bounds, trace = _stream_inputs(dataset, trained)
    n = len(trace)
    rng = np.random.default_rng(0)
    corrupt = np.zeros((n, 4))
    idx = rng.choice(n, n // 100, replace=False)
    corrupt[idx, 2] = 40.0 * rng.choice([-1.0, 1.0], idx.size)
    clean = run_stream(model.network, model.normalizer, trace, bounds)
    dirty = run_stream(model.network, model.normalizer, trace, bounds, corrupt=corrupt)
    truth = clean.raw[:, 2]
    unf = np.sqrt(np.mean((dirty.raw[:, 2] - truth) ** 2))
    filt = np.sqrt(np.mean((dirty.filtered[:, 2] - truth) ** 2))
    excess = lipschitz_excess(dirty.time, dirty.filtered, bounds, skip=dirty.reacquired)

    # identity holds on compliant streams: the clean network stream under
    # generous bounds, and the exact label stream under the estimated bounds
    generous = run_stream(model.network, model.normalizer, trace, LipschitzBounds(np.full(4, 1e9)))
    labels, label_clamped, _ = filter_trace(trace.time, trace.outputs, bounds)
    identical = np.array_equal(generous.filtered, generous.raw) and np.array_equal(labels, trace.outputs)
    ok = filt <= 0.5 * unf and identical and not label_clamped.any() and excess <= 1e-9
    verdict(5, "filter efficacy", ok,
            f"alpha RMSE filtered {filt:.3f} vs unfiltered {unf:.3f} deg; compliant streams identical {identical}; "
            f"cone excess {excess:.1e}; clean network stream clamps per dim {clean.clamped.sum(axis=0).tolist()}")


def test_c06_realtime_budget(verdict, dataset, trained):
    model, bounds, trace = _stream_inputs(dataset, trained)
    res = run_stream(model.network, model.normalizer, trace, bounds)
    mean, worst = res.latency_us.mean(), res.latency_us.max()
    verdict(6, "real-time budget", mean < 1000 and worst < 10_000,
            f"{res.latency_us.size} ticks, mean {mean:.1f} us, max {worst:.1f} us")


def test_c07_tracking(verdict):
    rep = run_tracking(reference_trace(1.2, 30))
    ok = (rep.max_delay_pct <= 3 and rep.max_peak_err_pct <= 5
          and rep.max_abs_torque <= 220.8 and rep.rms_torque < 82.8 and len(rep.cycles) == 30)
    verdict(7, "tracking at 1.2 m/s", ok,
            f"{len(rep.cycles)} cycles, max delay {rep.max_delay_pct:.2f}%, max peak error "
            f"{rep.max_peak_err_pct:.2f}%, |torque| max {rep.max_abs_torque:.2f} Nm, rms {rep.rms_torque:.2f} Nm")


def test_c08_actuator_arithmetic(verdict):
    p = ActuatorParams()
    t = torque_from_current(p.idle_current + 12.5)
    w = mech_power(82.8, 5.65 / DEG)
    k = sea_torque(1.0, SpringStack(7.5, 3))
    ok = abs(t - 82.8) <= 1e-9 and abs(w - 467.82) <= 1e-9 and abs(k - 22.5) <= 1e-12
    verdict(8, "actuator arithmetic", ok, f"torque {t!r} Nm, power {w!r} W, spring {k!r} Nm")


def test_c09_sea_physics(verdict):
    params = ActuatorParams(load_damping=0.0)
    stack = SpringStack()
    s0 = PlantState(trans_angle=1.0)
    e0 = sea_energy(s0, params, stack)
    s1 = simulate_open_loop(s0, 0.0, 1.0, 1e-4, params, stack)
    drift = abs(sea_energy(s1, params, stack) - e0) / e0

    rigid = ActuatorParams()
    J, b = rigid.total_inertia, rigid.load_damping
    s = simulate_open_loop(PlantState(), 1.0, 1.0, 1e-4, rigid)
    w = (1 - np.exp(-b / J)) / b
    a = (1 - J / b * (1 - np.exp(-b / J))) / b
    err = max(abs(s.rate * DEG - w), abs(s.alpha * DEG - a))
    verdict(9, "SEA physics", drift < 1e-6 and err < 1e-6,
            f"energy drift {drift:.2e} per s; rigid closed-form error {err:.2e}")


def test_c10_statistics(verdict):
    rng = np.random.default_rng(10)
    worst_p = worst_s = 0.0
    for i in range(100):
        x, y = rng.normal(size=25), rng.normal(size=25)
        if i % 2:
            x, y = np.round(x, 0), np.round(y, 0)  # half the instances carry ties
        worst_p = max(worst_p, abs(pearson(x, y).statistic - _brute_pearson(list(x), list(y))))
        worst_s = max(worst_s, abs(spearman(x, y).statistic
                                   - _brute_pearson(_brute_ranks(list(x)), _brute_ranks(list(y)))))
    sw = max(max(abs(shapiro_wilk(x).statistic - w), abs(shapiro_wilk(x).p_value - p)) for x, w, p in SW_VECTORS)

    f = np.arange(1.0, 9.0)
    normal = np.array([10.2, 9.1, 11.5, 10.0, 8.7, 10.9, 9.6, 10.4])
    skewed = np.array([1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 40.0])
    rep = correlation_report([DoeTable("t", np.column_stack([f, normal, skewed]))])
    branches = [e.branch for e in rep.entries]
    ok = worst_p <= 1e-12 and worst_s <= 1e-12 and sw <= 1e-3 and branches == ["pearson", "spearman"]
    verdict(10, "statistics", ok,
            f"pearson err {worst_p:.1e}, spearman err {worst_s:.1e}, SW vector err {sw:.1e}, branches {branches}")


def test_c11_formats(verdict, dataset, trained):
    back = parse_dataset_csv(write_dataset_csv(dataset))
    csv_err = float(np.max(np.abs(back.values - dataset.values)))
    net = trained[0][0].network
    blob = serialize_network(net)
    exact = serialize_network(deserialize_network(blob)) == blob

    named = {}
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0x01
    cases = {"checksum": bytes(flipped), "truncation": blob[:-3], "magic": b"XXXX" + blob[4:]}
    for check, data in cases.items():
        try:
            deserialize_network(data)
            named[check] = None
        except FormatError as exc:
            named[check] = exc.check
    ok = csv_err <= 1e-12 and exact and all(named[c] == c for c in cases)
    verdict(11, "formats", ok, f"CSV max error {csv_err:.1e}, weights bit-exact {exact}, rejections {named}")
