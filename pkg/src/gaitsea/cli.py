"""``gaitsea`` command line: data generation through plots.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
Outputs land under ``--out-dir`` in ``data/``, ``models/``, ``reports/`` and ``plots/``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .doestats import correlation_report, demo_table, load_doe_table
from .errors import (
    DegenerateChannelError,
    DegenerateSampleError,
    FormatError,
    InvalidArgumentError,
    NumericFailureError,
    ParseError,
)
from .evalkit import (
    DIMENSIONS,
    PHASE_PERIODS,
    angle_threshold_report,
    average_metrics,
    bucket_reports,
    buckets_csv,
    metrics_csv,
    regression_metrics,
    text_summary,
)
from .gaitdata import (
    Dataset,
    Normalizer,
    apply_normalizer,
    cycle_duration,
    generate_dataset,
    kfold_split,
    load_dataset,
    save_dataset,
)
from .mlpnet import NetworkConfig, TrainHyper, load_network, predict, save_network, train
from .plantsim import ActuatorParams, PidGains, ReferenceTrace, SpringStack, reference_trace, run_tracking
from .rtpipe import estimate_lipschitz_bounds, run_stream
from .svgplot import line_chart

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- layout and config ------------------------------------------------------


class Layout:
    def __init__(self, root):
        self.root = Path(root)
        for sub in ("data", "models", "reports", "plots"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def __getattr__(self, sub):
        if sub in ("data", "models", "reports", "plots"):
            return self.root / sub
        raise AttributeError(sub)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _network_config(cfg: RunConfig) -> NetworkConfig:
    n = cfg.section("network")
    return NetworkConfig(
        hidden_width=n["hidden_width"],
        hidden_per_stage=(n["hidden_stage1"], n["hidden_stage2"]),
        stage2_hidden_features=n["stage2_hidden_features"],
        phase_encoding=n["phase_encoding"],
        seed=n["seed"],
    )


def _train_hyper(cfg: RunConfig, epochs: int | None = None) -> TrainHyper:
    t = cfg.section("training")
    return TrainHyper(
        learning_rate=t["learning_rate"],
        weight_decay=t["weight_decay"],
        epochs=epochs if epochs is not None else t["epochs"],
        batch_size=t["batch_size"],
        lambda_mid=t["lambda_mid"],
        lambda_fin=t["lambda_fin"],
        decoupled_weight_decay=t["decoupled_weight_decay"],
        lr_schedule=t["lr_schedule"],
        min_learning_rate=t["min_learning_rate"],
    )


def _generate(cfg: RunConfig) -> Dataset:
    g = cfg.section("generator")
    return generate_dataset(
        speeds=g["speeds"],
        cycles_per_speed=g["cycles_per_speed"],
        sample_rate_hz=g["sample_rate_hz"],
        noise_std=(g["noise_angle_deg"], g["noise_rate_dps"]),
        seed=g["seed"],
    )


def _fold_plan(cfg: RunConfig, ds: Dataset):
    t = cfg.section("training")
    return kfold_split(ds, t["k_folds"], t["validation_fraction"], t["fold_seed"])


def _load_data(args, lay: Layout) -> Dataset:
    return load_dataset(args.data or lay.data / "dataset.csv")


def _save_normalizer(norm: Normalizer, path: Path) -> None:
    path.write_text(json.dumps(norm.to_dict(), indent=1) + "\n")


def _load_normalizer(path: Path) -> Normalizer:
    try:
        return Normalizer.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"{path}: unreadable normalizer ({exc})") from None


def _model_paths(models: Path, stem: str) -> tuple[Path, Path]:
    return models / f"{stem}.gmlp", models / f"{stem}.norm.json"


def _plant_setup(cfg: RunConfig):
    p = cfg.section("plant")
    params = ActuatorParams(
        idle_current=p["idle_current"],
        load_inertia=p["load_inertia"],
        load_damping=p["load_damping"],
        reflected_motor_inertia=p["reflected_motor_inertia"],
    )
    gains = PidGains(kp=p["kp"], ki=p["ki"], kd=p["kd"], integral_clamp=p["integral_clamp"],
                     current_limit=params.max_drive_current)
    stack = SpringStack(p["per_layer_stiffness"], p["layer_count"])
    return p, params, gains, stack


# --- commands ---------------------------------------------------------------


def cmd_gen_data(args, cfg, lay) -> int:
    ds = _generate(cfg)
    out = Path(args.output) if args.output else lay.data / "dataset.csv"
    save_dataset(ds, out)
    print(f"wrote {len(ds)} samples to {out}")
    return EXIT_OK


def cmd_train(args, cfg, lay) -> int:
    ds = _load_data(args, lay)
    plan = _fold_plan(cfg, ds)
    folds = None if args.folds is None else [int(f) for f in args.folds.split(",")]
    if folds is not None and any(not 0 <= f < plan.k for f in folds):
        raise InvalidArgumentError(f"fold indices must lie in [0, {plan.k})")

    def progress(rec):
        if args.verbose and (rec.epoch == 1 or rec.epoch % 20 == 0):
            print(f"fold {rec.fold} epoch {rec.epoch}: train fin {rec.train_fin:.4g} val fin {rec.val_fin:.4g}",
                  file=sys.stderr)

    models, report = train(ds, plan, _network_config(cfg), _train_hyper(cfg, args.epochs), folds, progress)
    for m in models:
        w, n = _model_paths(lay.models, f"fold{m.fold}")
        save_network(m.network, w)
        _save_normalizer(m.normalizer, n)
    best = min(zip(models, report.fold_tests), key=lambda mt: mt[1].loss_mid * _train_hyper(cfg).lambda_mid
               + mt[1].loss_fin)
    w, n = _model_paths(lay.models, "model")
    save_network(best[0].network, w)
    _save_normalizer(best[0].normalizer, n)
    (lay.reports / "train_log.csv").write_text(report.to_csv(include_timing=False))
    lines = ["fold,best_epoch,test_loss_mid,test_loss_fin," + ",".join(f"rmse_{d}" for d in DIMENSIONS)]
    for t in report.fold_tests:
        lines.append(f"{t.fold},{t.best_epoch},{t.loss_mid:.10g},{t.loss_fin:.10g},"
                     + ",".join(f"{t.metrics[d].rmse:.10g}" for d in DIMENSIONS))
    (lay.reports / "fold_metrics.csv").write_text("\n".join(lines) + "\n")
    mean = report.mean_test_metrics()
    print("mean held-out RMSE: " + " ".join(f"{d}={mean[d].rmse:.4g}" for d in DIMENSIONS))
    print(f"model (fold {best[0].fold}) written to {w}")
    return EXIT_OK


def cmd_eval(args, cfg, lay) -> int:
    ds = _load_data(args, lay)
    plan = _fold_plan(cfg, ds)
    preds, targets, per_fold = [], [], []
    for k in range(plan.k):
        w, n = _model_paths(lay.models, f"fold{k}")
        if not w.exists():
            continue
        net = load_network(w)
        norm = _load_normalizer(n)
        test = ds.subset(plan.split(k)[2])
        p = predict(net, apply_normalizer(norm, test.imu))
        preds.append(p)
        targets.append(test.outputs)
        per_fold.append(regression_metrics(p, test.outputs, periods=PHASE_PERIODS))
    if not preds:
        raise InvalidArgumentError(f"no fold models found in {lay.models}")
    pred, targ = np.vstack(preds), np.vstack(targets)
    mean = average_metrics(per_fold)
    buckets = bucket_reports(pred, targ)
    angle = angle_threshold_report(pred[:, 2], targ[:, 2])
    (lay.reports / "metrics.csv").write_text(metrics_csv(mean))
    (lay.reports / "buckets.csv").write_text(buckets_csv(list(buckets) + [angle.above, angle.below]))
    summary = text_summary(mean, buckets, angle)
    (lay.reports / "summary.txt").write_text(summary)
    print(f"evaluated {len(per_fold)} fold(s)")
    print(summary, end="")
    return EXIT_OK


def _impulses(n: int, fraction: float, magnitude: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.zeros((n, 4))
    k = int(round(fraction * n))
    if k:
        idx = rng.choice(n, size=k, replace=False)
        out[idx, 2] = magnitude * rng.choice([-1.0, 1.0], size=k)
    return out


def cmd_infer(args, cfg, lay) -> int:
    f = cfg.section("filter")
    g = cfg.section("generator")
    w = Path(args.model) if args.model else lay.models / "model.gmlp"
    net = load_network(w)
    norm = _load_normalizer(Path(args.normalizer) if args.normalizer else w.with_name(w.stem + ".norm.json"))
    train_path = Path(args.data) if args.data else lay.data / "dataset.csv"
    bounds_source = load_dataset(train_path) if train_path.exists() else _generate(cfg)
    bounds = estimate_lipschitz_bounds(bounds_source, f["safety_factor"], f["bound_floor"])

    if args.input:
        trace = load_dataset(args.input)
    else:
        trace = generate_dataset([args.speed], args.cycles, f["rate_hz"],
                                 (g["noise_angle_deg"], g["noise_rate_dps"]), g["seed"])
    results = []
    for tid in np.unique(trace.trial_ids()):
        part = trace.subset(np.flatnonzero(trace.trial_ids() == tid))
        corrupt = _impulses(len(part), args.impulse_fraction, args.impulse_deg, g["seed"] + int(tid))
        results.append(run_stream(net, norm, part, bounds, f["rate_hz"], f["rejection_limit"], corrupt))
    header, *_ = results[0].to_csv().splitlines()
    body = [ln for r in results for ln in r.to_csv().splitlines()[1:]]
    out = lay.reports / "stream.csv"
    out.write_text("\n".join([header] + body) + "\n")
    lat = np.concatenate([r.latency_us for r in results])
    filt = np.vstack([r.filtered for r in results])
    rej = np.vstack([r.clamped for r in results]).sum(axis=0)
    rmse = regression_metrics(filt, trace.outputs, periods=PHASE_PERIODS)
    print(f"{lat.size} ticks; latency mean {lat.mean():.1f} us, max {lat.max():.1f} us")
    print("rejections: " + " ".join(f"{d}={int(c)}" for d, c in zip(DIMENSIONS, rej)))
    print("filtered RMSE vs labels: " + " ".join(f"{d}={rmse[d].rmse:.4g}" for d in DIMENSIONS))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args, cfg, lay) -> int:
    p, params, gains, stack = _plant_setup(cfg)
    speed = args.speed if args.speed is not None else p["speed"]
    cycles = args.cycles if args.cycles is not None else p["cycles"]
    mode = args.mode or p["mode"]
    rate = cfg["filter.rate_hz"]
    if args.source == "model":
        w = Path(args.model) if args.model else lay.models / "model.gmlp"
        net = load_network(w)
        norm = _load_normalizer(w.with_name(w.stem + ".norm.json"))
        g = cfg.section("generator")
        trace = generate_dataset([speed], cycles, rate, (g["noise_angle_deg"], g["noise_rate_dps"]), g["seed"])
        alpha = predict(net, apply_normalizer(norm, trace.imu))[:, 2]
        ref = ReferenceTrace(trace.time, np.clip(alpha, -params.motion_range_deg, params.motion_range_deg),
                             float(cycle_duration(speed)))
    else:
        ref = reference_trace(speed, cycles, rate)
    rep = run_tracking(ref, params, gains, mode, stack, p["substep"], p["hard_stops"],
                       p["current_noise_std"], cfg["generator.seed"])
    (lay.reports / "tracking.csv").write_text(rep.to_csv())
    (lay.reports / "tracking_summary.csv").write_text(rep.summary_csv())
    (lay.reports / "tracking.json").write_text(
        json.dumps({"speed_mps": speed, "cycle_s": ref.cycle_s, "mode": mode}, indent=1) + "\n")
    print(f"{len(rep.cycles)} cycles at {speed:g} m/s ({mode}): max delay {rep.max_delay_pct:.2f}% of cycle, "
          f"max peak error {rep.max_peak_err_pct:.2f}%, |torque| max {rep.max_abs_torque:.2f} Nm, "
          f"rms {rep.rms_torque:.2f} Nm")
    return EXIT_OK


def cmd_doe_stats(args, cfg, lay) -> int:
    tables = [load_doe_table(p) for p in args.tables]
    if args.demo:
        demo = demo_table(seed=cfg["generator.seed"])
        path = lay.data / "doe_demo.csv"
        path.write_text(demo.to_csv())
        tables.append(demo)
    report = correlation_report(tables)
    (lay.reports / "doe_report.csv").write_text(report.to_csv())
    print(report.to_text(), end="")
    return EXIT_OK


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in path.read_text().splitlines() if ln]
    head = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        vals = []
        for v in ln.split(","):
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(np.nan)
        rows.append(vals)
    return head, np.array(rows, dtype=float).reshape(-1, len(head))


def _cycle_mean(t: np.ndarray, y: np.ndarray, cycle_s: float, bins: int = 100):
    pct = 100.0 * np.mod(t - t[0], cycle_s) / cycle_s
    idx = np.minimum((pct / 100.0 * bins).astype(int), bins - 1)
    sums = np.bincount(idx, y, bins)
    counts = np.bincount(idx, minlength=bins)
    centers = (np.arange(bins) + 0.5) * 100.0 / bins
    ok = counts > 0
    return centers[ok], sums[ok] / counts[ok]


def cmd_report(args, cfg, lay) -> int:
    written = []
    track = lay.reports / "tracking.csv"
    if track.exists():
        meta = json.loads((lay.reports / "tracking.json").read_text())
        head, d = _read_csv(track)
        col = {h: d[:, i] for i, h in enumerate(head)}
        t, T = col["time_s"], meta["cycle_s"]
        label = f"{meta['speed_mps']:g} m/s"
        panels = {
            "angle.svg": ([(*_cycle_mean(t, col["alpha_ref_deg"], T), "reference"),
                           (*_cycle_mean(t, col["alpha_meas_deg"], T), "measured")],
                          "ankle angle (deg)"),
            "torque.svg": ([(*_cycle_mean(t, col["torque_nm"], T), "torque")], "torque (Nm)"),
            "power.svg": ([(*_cycle_mean(t, col["power_w"], T), "power")], "power (W)"),
        }
        for name, (series, ylabel) in panels.items():
            (lay.plots / name).write_text(line_chart(series, f"{ylabel.split(' (')[0]} at {label}",
                                                     "gait cycle (%)", ylabel))
            written.append(name)
    log = lay.reports / "train_log.csv"
    if log.exists():
        head, d = _read_csv(log)
        col = {h: d[:, i] for i, h in enumerate(head)}
        series = []
        for fold in np.unique(col["fold"]):
            sel = col["fold"] == fold
            series.append((col["epoch"][sel], np.log10(col["train_fin"][sel]), f"train fold {int(fold)}"))
            series.append((col["epoch"][sel], np.log10(col["val_fin"][sel]), f"val fold {int(fold)}"))
        (lay.plots / "loss.svg").write_text(line_chart(series, "final-output loss", "epoch", "log10 MSE"))
        written.append("loss.svg")
    stream = lay.reports / "stream.csv"
    if stream.exists():
        head, d = _read_csv(stream)
        col = {h: d[:, i] for i, h in enumerate(head)}
        n = np.arange(col["time_s"].size)
        (lay.plots / "stream.svg").write_text(line_chart(
            [(n, col["alpha_hat"], "alpha"), (n, col["p_hat"], "phase")],
            "streamed estimates", "tick", "deg / % cycle"))
        written.append("stream.svg")
    if not written:
        raise InvalidArgumentError(f"nothing to plot in {lay.reports}")
    print("wrote " + ", ".join(str(lay.plots / w) for w in written))
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override every seed in the config (default: config values)")
    common.add_argument("--config", default=None,
                        help="config file of 'section.key = value' lines, or 'default' (default: defaults)")
    common.add_argument("--out-dir", default="gaitsea_out", help="output root (default: %(default)s)")

    parser = _Parser(prog="gaitsea", description=__doc__.split("\n")[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"gaitsea {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", parents=[common], formatter_class=fmt, help="write the synthetic dataset CSV")
    p.add_argument("--output", default=None, help="CSV path (default: <out-dir>/data/dataset.csv)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, help="cross-validated training")
    p.add_argument("--data", default=None, help="dataset CSV (default: <out-dir>/data/dataset.csv)")
    p.add_argument("--epochs", type=int, default=None, help="override training.epochs")
    p.add_argument("--folds", default=None, help="comma-separated fold indices (default: all)")
    p.add_argument("--verbose", action="store_true", help="print progress every 20 epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="held-out metrics for trained folds")
    p.add_argument("--data", default=None, help="dataset CSV (default: <out-dir>/data/dataset.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", parents=[common], formatter_class=fmt, help="stream a trace through model + filter")
    p.add_argument("--model", default=None, help="weights file (default: <out-dir>/models/model.gmlp)")
    p.add_argument("--normalizer", default=None, help="normalizer JSON (default: next to the model)")
    p.add_argument("--data", default=None, help="training CSV used for the rate bounds")
    p.add_argument("--input", default=None, help="dataset CSV to stream (default: generate a trace)")
    p.add_argument("--speed", type=float, default=1.2, help="speed of the generated trace, m/s")
    p.add_argument("--cycles", type=int, default=5, help="cycles in the generated trace")
    p.add_argument("--impulse-fraction", type=float, default=0.0, help="fraction of ticks with an alpha impulse")
    p.add_argument("--impulse-deg", type=float, default=40.0, help="impulse magnitude, degrees")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, help="closed-loop tracking experiment")
    p.add_argument("--speed", type=float, default=None, help="override plant.speed, m/s")
    p.add_argument("--cycles", type=int, default=None, help="override plant.cycles")
    p.add_argument("--mode", choices=("rigid", "sea"), default=None, help="override plant.mode")
    p.add_argument("--source", choices=("generator", "model"), default="generator",
                   help="reference angle from the generator or from the trained model")
    p.add_argument("--model", default=None, help="weights file for --source model")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("doe-stats", parents=[common], formatter_class=fmt, help="normality + correlation report")
    p.add_argument("tables", nargs="*", help="DOE table CSV files")
    p.add_argument("--demo", action="store_true", help="also analyse a synthetic demo table")
    p.set_defaults(func=cmd_doe_stats)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt, help="render report CSVs as SVG plots")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        lay = Layout(args.out_dir)
        (lay.root / "effective_config.txt").write_text(cfg.render())
        return args.func(args, cfg, lay)
    except (NumericFailureError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, FormatError, InvalidArgumentError, DegenerateChannelError,
            DegenerateSampleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
