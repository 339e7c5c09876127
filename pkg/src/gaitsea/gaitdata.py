"""Synthetic gait data, the dataset CSV format, fold plans and input scaling.

The generator maps (speed, phase) to shank IMU angles/rates and ankle
kinematics through a smooth closed form, so that every label is exact and
the regression problem is well posed.  Speeds default to the twelve
treadmill speeds used for motion capture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateChannelError, InvalidArgumentError, ParseError

COLUMNS = (
    "time_s",
    "speed_mps",
    "phase_pct",
    "theta_deg",
    "phi_deg",
    "psi_deg",
    "dtheta_dps",
    "dphi_dps",
    "dpsi_dps",
    "alpha_deg",
    "dalpha_dps",
)
HEADER = ",".join(COLUMNS)

# column slices into Dataset.values
IMU = slice(3, 9)
MIDDLE = slice(1, 3)  # speed, phase
FINAL = slice(9, 11)  # ankle angle, ankle rate

DEFAULT_SPEEDS = (0.5, 0.8, 1.25, 1.5, 1.8, 2.0, 2.5, 2.8, 3.0, 3.3, 3.5, 4.5)
DEFAULT_CYCLES_PER_SPEED = 30
DEFAULT_SAMPLE_RATE_HZ = 100.0
DEFAULT_NOISE_STD = (0.5, 5.0)  # degrees on angles, degrees/s on rates

MOTION_RANGE_DEG = 50.0
PHASE_PERIOD = 100.0


@dataclass(frozen=True)
class GaitSample:
    time: float
    speed: float
    phase: float
    theta: float
    phi: float
    psi: float
    dtheta: float
    dphi: float
    dpsi: float
    alpha: float
    dalpha: float

    @property
    def imu(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.psi, self.dtheta, self.dphi, self.dpsi])

    def as_row(self) -> tuple[float, ...]:
        return (
            self.time, self.speed, self.phase,
            self.theta, self.phi, self.psi,
            self.dtheta, self.dphi, self.dpsi,
            self.alpha, self.dalpha,
        )


class Kinematics(NamedTuple):
    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    dtheta: np.ndarray
    dphi: np.ndarray
    dpsi: np.ndarray
    alpha: np.ndarray
    dalpha: np.ndarray


def cycle_duration(speed):
    """Gait cycle duration in seconds; shortens with speed down to 0.4 s."""
    return np.maximum(0.4, 1.4 - 0.2 * np.asarray(speed, dtype=float))


def gait_template(speed, phase) -> Kinematics:
    """Noise-free shank and ankle kinematics at ``speed`` (m/s) and ``phase`` (%).

    Accepts scalars or broadcastable arrays. Rates are the exact time
    derivatives of the angles; the ankle rate is zero wherever the angle
    sits on the +/-50 degree clip.
    """
    v = np.asarray(speed, dtype=float)
    p = np.asarray(phase, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < 0):
        raise InvalidArgumentError("speed must be finite and >= 0")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p >= PHASE_PERIOD):
        raise InvalidArgumentError("phase must lie in [0, 100)")

    x = 2.0 * np.pi * (p / PHASE_PERIOD)
    per_second = 1.0 / cycle_duration(v)  # d(p/100)/dt

    theta = v * 15.0 * np.sin(x - 0.3)
    dtheta = v * 15.0 * 2.0 * np.pi * np.cos(x - 0.3) * per_second

    raw_alpha = v * (10.0 * np.sin(x) + 4.0 * np.sin(2.0 * x + 0.7))
    raw_dalpha = v * (20.0 * np.pi * np.cos(x) + 16.0 * np.pi * np.cos(2.0 * x + 0.7)) * per_second
    clipped = np.abs(raw_alpha) > MOTION_RANGE_DEG
    alpha = np.clip(raw_alpha, -MOTION_RANGE_DEG, MOTION_RANGE_DEG)
    dalpha = np.where(clipped, 0.0, raw_dalpha)

    return Kinematics(
        theta=theta,
        phi=0.2 * theta,
        psi=0.1 * theta,
        dtheta=dtheta,
        dphi=0.2 * dtheta,
        dpsi=0.1 * dtheta,
        alpha=alpha,
        dalpha=dalpha,
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered block of samples, stored as an ``(n, 11)`` array in CSV column order.

    Trials are contiguous runs where time advances by one sample period at a
    constant speed; gait cycles are split at phase wrap-around.
    """

    values: np.ndarray
    source_tag: str = ""
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1, len(COLUMNS))
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be > 0")

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> GaitSample:
        return GaitSample(*(float(x) for x in self.values[i]))

    @property
    def samples(self) -> list[GaitSample]:
        return [GaitSample(*row) for row in self.values.tolist()]

    @property
    def time(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def speed(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def phase(self) -> np.ndarray:
        return self.values[:, 2]

    @property
    def imu(self) -> np.ndarray:
        return self.values[:, IMU]

    @property
    def middle(self) -> np.ndarray:
        return self.values[:, MIDDLE]

    @property
    def final(self) -> np.ndarray:
        return self.values[:, FINAL]

    @property
    def outputs(self) -> np.ndarray:
        """Labels in network output order: (v, p, alpha, dalpha)."""
        return np.hstack([self.middle, self.final])

    def subset(self, indices) -> "Dataset":
        return Dataset(self.values[np.asarray(indices)], self.source_tag, self.sample_rate_hz)

    def trial_ids(self) -> np.ndarray:
        n = len(self)
        if n == 0:
            return np.zeros(0, dtype=int)
        step = 1.0 / self.sample_rate_hz
        dt = np.diff(self.time)
        breaks = (np.abs(dt - step) > 1e-6 * step) | (np.diff(self.speed) != 0)
        return np.concatenate([[0], np.cumsum(breaks)])

    def cycle_ids(self) -> np.ndarray:
        n = len(self)
        if n == 0:
            return np.zeros(0, dtype=int)
        new_trial = np.diff(self.trial_ids()) != 0
        wrapped = np.diff(self.phase) < 0
        return np.concatenate([[0], np.cumsum(new_trial | wrapped)])

    def equals(self, other: "Dataset", atol: float = 0.0) -> bool:
        return (
            self.values.shape == other.values.shape
            and bool(np.all(np.abs(self.values - other.values) <= atol))
        )


def _noise_vector(noise_std) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(noise_std, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, 6)
    elif arr.size == 2:
        arr = np.repeat(arr, 3)
    if arr.size != 6 or np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise InvalidArgumentError("noise_std must be a scalar, (angle, rate) pair or 6 values >= 0")
    return arr


def generate_dataset(
    speeds: Sequence[float] = DEFAULT_SPEEDS,
    cycles_per_speed: int = DEFAULT_CYCLES_PER_SPEED,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    noise_std=DEFAULT_NOISE_STD,
    seed: int = 0,
) -> Dataset:
    """Sample ``cycles_per_speed`` gait cycles per speed, one trial per speed.

    Gaussian noise is added to the six IMU channels only; labels stay exact.
    Each trial restarts its clock at zero.
    """
    speeds = list(speeds)
    if not speeds:
        raise InvalidArgumentError("speed list is empty")
    if cycles_per_speed < 1:
        raise InvalidArgumentError("cycles_per_speed must be >= 1")
    if not sample_rate_hz > 0:
        raise InvalidArgumentError("sample_rate_hz must be > 0")
    std = _noise_vector(noise_std)
    rng = np.random.default_rng(seed)

    blocks = []
    for v in speeds:
        period = float(cycle_duration(v))
        n = int(round(cycles_per_speed * period * sample_rate_hz))
        t = np.arange(n) / sample_rate_hz
        cycles = t / period
        phase = (cycles - np.floor(cycles)) * PHASE_PERIOD
        # guard against 100.0 from rounding in the fractional part
        phase = np.where(phase >= PHASE_PERIOD, 0.0, phase)
        kin = gait_template(v, phase)
        imu = np.column_stack(kin[:6])
        imu = imu + rng.standard_normal(imu.shape) * std
        block = np.column_stack([t, np.full(n, float(v)), phase, imu, kin.alpha, kin.dalpha])
        blocks.append(block)

    tag = f"synthetic(seed={seed})"
    return Dataset(np.vstack(blocks), tag, float(sample_rate_hz))


# -- CSV -------------------------------------------------------------------


def write_dataset_csv(dataset: Dataset) -> str:
    lines = [HEADER]
    for row in dataset.values.tolist():
        lines.append(",".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def parse_dataset_csv(
    text: str,
    sample_rate_hz: float | None = None,
    source_tag: str = "csv",
) -> Dataset:
    """Parse the dataset CSV. Errors carry the 1-based line number.

    When ``sample_rate_hz`` is not given it is inferred from the median
    positive time step (100 Hz if the file has fewer than two samples).
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError(1, f"missing or malformed header; expected {HEADER!r}")

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            continue
        if not line.strip():
            raise ParseError(lineno, "blank line")
        fields = line.split(",")
        if len(fields) != len(COLUMNS):
            raise ParseError(lineno, f"expected {len(COLUMNS)} columns, got {len(fields)}")
        try:
            row = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(lineno, f"unparseable number ({exc})") from None
        if not all(math.isfinite(x) for x in row):
            raise ParseError(lineno, "non-finite number")
        if row[1] < 0:
            raise ParseError(lineno, "speed must be >= 0")
        if not 0 <= row[2] < PHASE_PERIOD:
            raise ParseError(lineno, "phase must lie in [0, 100)")
        rows.append(row)

    values = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    if sample_rate_hz is None:
        steps = np.diff(values[:, 0])
        steps = steps[steps > 0]
        sample_rate_hz = 1.0 / float(np.median(steps)) if steps.size else DEFAULT_SAMPLE_RATE_HZ
    return Dataset(values, source_tag, sample_rate_hz)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(write_dataset_csv(dataset), encoding="utf-8")


def load_dataset(path, sample_rate_hz: float | None = None) -> Dataset:
    path = Path(path)
    return parse_dataset_csv(path.read_text(encoding="utf-8"), sample_rate_hz, source_tag=str(path))


# -- folds -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Cycle-level k-fold partition; ``validation[i]`` is carved out of round i's train set."""

    k: int
    folds: tuple[np.ndarray, ...]
    validation: tuple[np.ndarray, ...]
    n_samples: int
    validation_fraction: float = 0.30
    seed: int = 0

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return sorted (train, validation, test) sample indices for round ``i``."""
        test = self.folds[i]
        val = self.validation[i]
        mask = np.ones(self.n_samples, dtype=bool)
        mask[test] = False
        mask[val] = False
        return np.flatnonzero(mask), val, test


def kfold_split(
    dataset: Dataset,
    k: int = 5,
    validation_fraction: float = 0.30,
    seed: int = 0,
) -> FoldPlan:
    if k < 2:
        raise InvalidArgumentError("k must be >= 2")
    if not 0 <= validation_fraction < 1:
        raise InvalidArgumentError("validation_fraction must lie in [0, 1)")
    cycle_of = dataset.cycle_ids()
    n_cycles = int(cycle_of.max()) + 1 if len(dataset) else 0
    if n_cycles < k:
        raise InvalidArgumentError(f"dataset has {n_cycles} cycles, fewer than k={k}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_cycles)
    fold_cycles = np.array_split(order, k)
    members = [np.flatnonzero(cycle_of == c) for c in range(n_cycles)]

    def indices(cycles: Iterable[int]) -> np.ndarray:
        picked = [members[c] for c in cycles]
        return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=int)

    folds, validation = [], []
    for i in range(k):
        train_cycles = np.concatenate([fold_cycles[j] for j in range(k) if j != i])
        n_val = int(round(validation_fraction * train_cycles.size))
        val_cycles = rng.choice(train_cycles, size=n_val, replace=False)
        folds.append(indices(fold_cycles[i]))
        validation.append(indices(val_cycles))
    return FoldPlan(k, tuple(folds), tuple(validation), len(dataset), validation_fraction, seed)


# -- normalization ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        mean = np.asarray(d["mean"], dtype=float)
        std = np.asarray(d["std"], dtype=float)
        if mean.shape != (6,) or std.shape != (6,):
            raise InvalidArgumentError("normalizer needs 6 means and 6 stds")
        if np.any(std <= 0):
            raise DegenerateChannelError("normalizer std entries must be > 0")
        return cls(mean, std)


def fit_normalizer(dataset: Dataset) -> Normalizer:
    if len(dataset) == 0:
        raise InvalidArgumentError("cannot fit a normalizer on an empty dataset")
    x = dataset.imu
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    bad = [COLUMNS[IMU][j] for j in range(6) if not std[j] > 0]
    if bad:
        raise DegenerateChannelError(f"zero-variance input channel(s): {', '.join(bad)}")
    return Normalizer(mean, std)


def apply_normalizer(normalizer: Normalizer, x) -> np.ndarray:
    """Standardize a 6-vector or an ``(n, 6)`` block of IMU channels."""
    return (np.asarray(x, dtype=float) - normalizer.mean) / normalizer.std
