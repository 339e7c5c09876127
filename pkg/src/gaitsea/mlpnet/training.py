"""Cross-validated training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from ..errors import InvalidArgumentError
from ..evalkit import PHASE_PERIODS, PerDimMetrics, average_metrics, regression_metrics
from ..gaitdata import Dataset, FoldPlan, Normalizer, apply_normalizer, fit_normalizer
from .network import (
    BranchedNetwork,
    NetworkConfig,
    backward,
    encode_middle,
    forward_batch,
    init_network,
    loss,
    predict,
)
from .optim import AdamState, TrainHyper, adam_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    fold: int
    epoch: int
    train_mid: float
    train_fin: float
    val_mid: float
    val_fin: float
    seconds: float

    @property
    def val_total(self) -> float:
        return self.val_mid + self.val_fin


@dataclass(frozen=True)
class FoldTest:
    fold: int
    best_epoch: int
    loss_mid: float
    loss_fin: float
    metrics: PerDimMetrics


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    fold_tests: list[FoldTest] = field(default_factory=list)

    def fold_records(self, fold: int) -> list[EpochRecord]:
        return [r for r in self.records if r.fold == fold]

    def mean_test_metrics(self) -> PerDimMetrics:
        return average_metrics([t.metrics for t in self.fold_tests])

    def to_csv(self, include_timing: bool = True) -> str:
        """Per-epoch losses; drop the wall-clock column for reproducible files."""
        head = "fold,epoch,train_mid,train_fin,val_mid,val_fin"
        lines = [head + (",seconds" if include_timing else "")]
        for r in self.records:
            row = (
                f"{r.fold},{r.epoch},{r.train_mid:.10g},{r.train_fin:.10g},"
                f"{r.val_mid:.10g},{r.val_fin:.10g}"
            )
            lines.append(row + (f",{r.seconds:.4f}" if include_timing else ""))
        return "\n".join(lines) + "\n"


@dataclass
class FoldModel:
    fold: int
    network: BranchedNetwork
    normalizer: Normalizer
    test_indices: np.ndarray

    def predict(self, imu) -> np.ndarray:
        """(n, 4) predictions (V, P, alpha, dalpha) from raw IMU channels."""
        return predict(self.network, apply_normalizer(self.normalizer, np.atleast_2d(imu)))


def _arrays(dataset: Dataset, normalizer: Normalizer, encoding: str):
    x = apply_normalizer(normalizer, dataset.imu)
    return x, encode_middle(dataset.middle, encoding), np.asarray(dataset.final)


def _losses(net, x, ym, yf, hyper: TrainHyper) -> tuple[float, float]:
    if x.shape[0] == 0:
        return float("nan"), float("nan")
    middle, final = forward_batch(net, x)
    lm, lf, _ = loss(middle, final, ym, yf, hyper.lambda_mid, hyper.lambda_fin)
    return lm, lf


def train_fold(
    dataset: Dataset,
    fold_plan: FoldPlan,
    fold: int,
    config: NetworkConfig = NetworkConfig(),
    hyper: TrainHyper = TrainHyper(),
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[FoldModel, list[EpochRecord], FoldTest]:
    train_idx, val_idx, test_idx = fold_plan.split(fold)
    if train_idx.size == 0:
        raise InvalidArgumentError(f"fold {fold}: empty train split")
    train_set = dataset.subset(train_idx)
    normalizer = fit_normalizer(train_set)
    enc = config.phase_encoding
    xt, ymt, yft = _arrays(train_set, normalizer, enc)
    xv, ymv, yfv = _arrays(dataset.subset(val_idx), normalizer, enc)

    net = init_network(replace(config, seed=config.seed + fold))
    params = net.parameters()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([config.seed, fold])
    n = xt.shape[0]
    step = 0
    best_net, best_epoch, best_score = net.copy(), 0, np.inf
    records = []

    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        lr = hyper.learning_rate_at(epoch)
        order = rng.permutation(n)
        sum_mid = sum_fin = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            grads, (lm, lf, _) = backward(
                net, xt[idx], ymt[idx], yft[idx], hyper.lambda_mid, hyper.lambda_fin
            )
            sum_mid += lm * idx.size
            sum_fin += lf * idx.size
            step += 1
            adam_update(params, grads, state, hyper, step, lr)
        vm, vf = _losses(net, xv, ymv, yfv, hyper)
        rec = EpochRecord(fold, epoch, sum_mid / n, sum_fin / n, vm, vf, time.perf_counter() - t0)
        records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)

        if val_idx.size:
            score = hyper.lambda_mid * vm + hyper.lambda_fin * vf
        else:
            score = hyper.lambda_mid * rec.train_mid + hyper.lambda_fin * rec.train_fin
        if score < best_score:
            best_net, best_epoch, best_score = net.copy(), epoch, score

    test_set = dataset.subset(test_idx)
    model = FoldModel(fold, best_net, normalizer, test_idx)
    if test_idx.size:
        x_test, ym_test, yf_test = _arrays(test_set, normalizer, enc)
        tm, tf = _losses(best_net, x_test, ym_test, yf_test, hyper)
        metrics = regression_metrics(model.predict(test_set.imu), test_set.outputs, periods=PHASE_PERIODS)
    else:
        tm = tf = float("nan")
        metrics = PerDimMetrics({})
    log.info("fold %d: best epoch %d, test loss mid %.4g fin %.4g", fold, best_epoch, tm, tf)
    return model, records, FoldTest(fold, best_epoch, tm, tf, metrics)


def train(
    dataset: Dataset,
    fold_plan: FoldPlan,
    config: NetworkConfig = NetworkConfig(),
    hyper: TrainHyper = TrainHyper(),
    folds: Iterable[int] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[list[FoldModel], TrainReport]:
    """Train one network per fold; keep each fold's lowest-validation-loss weights."""
    if len(dataset) == 0:
        raise InvalidArgumentError("empty dataset")
    if fold_plan.n_samples != len(dataset):
        raise InvalidArgumentError("fold plan was built for a different dataset")
    models, report = [], TrainReport()
    for fold in (range(fold_plan.k) if folds is None else folds):
        model, records, test = train_fold(dataset, fold_plan, fold, config, hyper, on_epoch)
        models.append(model)
        report.records.extend(records)
        report.fold_tests.append(test)
    return models, report
