"""Regression metrics, relative-error buckets and the ankle-angle threshold split."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError

DIMENSIONS = ("v", "p", "alpha", "dalpha")
PHASE_PERIODS = {"p": 100.0}
DEFAULT_THRESHOLDS = (0.05, 0.10, 0.25)


@dataclass(frozen=True)
class DimMetrics:
    mse: float
    rmse: float
    mae: float
    count: int


@dataclass(frozen=True)
class PerDimMetrics:
    dims: dict[str, DimMetrics]

    def __getitem__(self, name: str) -> DimMetrics:
        return self.dims[name]

    def __iter__(self):
        return iter(self.dims.items())


@dataclass(frozen=True)
class BucketReport:
    dimension: str
    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]
    count: int

    def fraction_within(self, threshold: float) -> float:
        return self.fractions[self.thresholds.index(threshold)]


@dataclass(frozen=True)
class AngleThresholdReport:
    threshold_deg: float
    below: BucketReport
    above: BucketReport
    above_fraction: float


def abs_error(pred, target, period: float | None = None) -> np.ndarray:
    """|pred - target|, or the shorter way round a circle of length ``period``."""
    d = np.abs(np.asarray(pred, float) - np.asarray(target, float))
    if period is None:
        return d
    d = np.mod(d, period)
    return np.minimum(d, period - d)


def _as_columns(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def regression_metrics(
    predictions,
    targets,
    names: Sequence[str] = DIMENSIONS,
    periods: Mapping[str, float] | None = None,
) -> PerDimMetrics:
    """MSE, RMSE and MAE per column.

    ``periods`` maps a dimension name to a cycle length; those columns use
    circular error (pass :data:`PHASE_PERIODS` to treat phase that way).
    """
    pred = _as_columns(predictions)
    targ = _as_columns(targets)
    if pred.shape != targ.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {targ.shape}")
    if pred.shape[0] == 0:
        raise InvalidArgumentError("no samples")
    if pred.shape[1] != len(names):
        raise InvalidArgumentError(f"{pred.shape[1]} columns but {len(names)} names")
    periods = periods or {}
    out = {}
    for j, name in enumerate(names):
        err = abs_error(pred[:, j], targ[:, j], periods.get(name))
        mse = float(np.mean(err**2))
        out[name] = DimMetrics(mse, float(np.sqrt(mse)), float(np.mean(err)), int(err.size))
    return PerDimMetrics(out)


def average_metrics(items: Sequence[PerDimMetrics]) -> PerDimMetrics:
    """Mean of each metric across folds; counts are summed."""
    if not items:
        raise InvalidArgumentError("nothing to average")
    out = {}
    for name in items[0].dims:
        rows = [m[name] for m in items]
        out[name] = DimMetrics(
            float(np.mean([r.mse for r in rows])),
            float(np.mean([r.rmse for r in rows])),
            float(np.mean([r.mae for r in rows])),
            sum(r.count for r in rows),
        )
    return PerDimMetrics(out)


def relative_error(pred, target, denominator_floor: float = 1.0, period: float | None = None) -> np.ndarray:
    return abs_error(pred, target, period) / np.maximum(np.abs(np.asarray(target, float)), denominator_floor)


def relative_error_buckets(
    predictions,
    targets,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    denominator_floor: float = 1.0,
    dimension: str = "",
    period: float | None = None,
) -> BucketReport:
    """Share of samples whose relative error is at most each threshold.

    Thresholds are fractions (0.05 means 5 %). Phase should be passed with
    ``period=100`` so the numerator is the circular distance.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if list(thresholds) != sorted(thresholds):
        raise InvalidArgumentError("thresholds must be sorted ascending")
    pred = np.asarray(predictions, float).ravel()
    targ = np.asarray(targets, float).ravel()
    if pred.shape != targ.shape:
        raise InvalidArgumentError("length mismatch")
    if pred.size == 0:
        raise InvalidArgumentError("no samples")
    rel = relative_error(pred, targ, denominator_floor, period)
    fractions = tuple(float(np.mean(rel <= t)) for t in thresholds)
    return BucketReport(dimension, thresholds, fractions, int(pred.size))


def bucket_reports(
    predictions,
    targets,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    denominator_floor: float = 1.0,
) -> list[BucketReport]:
    """Buckets for every (v, p, alpha, dalpha) column, phase treated circularly."""
    pred = _as_columns(predictions)
    targ = _as_columns(targets)
    return [
        relative_error_buckets(
            pred[:, j], targ[:, j], thresholds, denominator_floor, name, PHASE_PERIODS.get(name)
        )
        for j, name in enumerate(DIMENSIONS)
    ]


def angle_threshold_report(
    predictions,
    targets,
    threshold_deg: float = 15.0,
    thresholds: Sequence[float] = (0.10, 0.25),
    denominator_floor: float = 1.0,
) -> AngleThresholdReport:
    """Split angle samples at ``|target| > threshold_deg`` and bucket each side."""
    if not threshold_deg > 0:
        raise InvalidArgumentError("threshold_deg must be > 0")
    pred = np.asarray(predictions, float).ravel()
    targ = np.asarray(targets, float).ravel()
    if pred.shape != targ.shape:
        raise InvalidArgumentError("length mismatch")
    above = np.abs(targ) > threshold_deg
    tag = f"{threshold_deg:g}"

    def side(mask, name):
        if not mask.any():
            return BucketReport(name, tuple(thresholds), (), 0)
        return relative_error_buckets(pred[mask], targ[mask], thresholds, denominator_floor, name)

    return AngleThresholdReport(
        float(threshold_deg),
        below=side(~above, f"alpha_below_{tag}"),
        above=side(above, f"alpha_above_{tag}"),
        above_fraction=float(above.mean()) if above.size else 0.0,
    )


# -- report emission ---------------------------------------------------------


def metrics_csv(metrics: PerDimMetrics) -> str:
    lines = ["dimension,mse,rmse,mae,count"]
    for name, m in metrics:
        lines.append(f"{name},{m.mse:.12g},{m.rmse:.12g},{m.mae:.12g},{m.count}")
    return "\n".join(lines) + "\n"


def buckets_csv(reports: Sequence[BucketReport]) -> str:
    lines = ["dimension,threshold_pct,fraction"]
    for r in reports:
        for t, f in zip(r.thresholds, r.fractions):
            lines.append(f"{r.dimension},{100 * t:g},{f:.6f}")
    return "\n".join(lines) + "\n"


def text_summary(
    metrics: PerDimMetrics,
    buckets: Sequence[BucketReport] = (),
    angle: AngleThresholdReport | None = None,
) -> str:
    out = ["dimension      rmse         mae          n"]
    for name, m in metrics:
        out.append(f"{name:<8} {m.rmse:12.4f} {m.mae:12.4f} {m.count:8d}")
    for r in buckets:
        parts = ", ".join(f"{100 * t:g}%: {100 * f:.1f}%" for t, f in zip(r.thresholds, r.fractions))
        out.append(f"{r.dimension} relative error within {parts} (n={r.count})")
    if angle is not None:
        out.append(f"|alpha| > {angle.threshold_deg:g} deg on {100 * angle.above_fraction:.1f}% of samples")
        for r in (angle.above, angle.below):
            if r.count:
                parts = ", ".join(f"{100 * t:g}%: {100 * f:.1f}%" for t, f in zip(r.thresholds, r.fractions))
                out.append(f"  {r.dimension}: within {parts} (n={r.count})")
            else:
                out.append(f"  {r.dimension}: no samples")
    return "\n".join(out) + "\n"
