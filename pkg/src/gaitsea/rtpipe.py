"""Fixed-rate streaming inference with a per-dimension Lipschitz output filter.

Each output dimension may move at most ``L * dt`` between ticks. A jump
larger than that is clamped onto the cone around the last emitted value;
after ``rejection_limit`` consecutive clamps on a dimension the next raw
value is passed through unchanged so a genuine regime change is re-acquired.
Phase is compared on the circle of length 100.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .gaitdata import Dataset, Normalizer, apply_normalizer
from .mlpnet.network import BranchedNetwork, predict

OUTPUT_NAMES = ("v", "p", "alpha", "dalpha")
PHASE_INDEX = 1
PHASE_PERIOD = 100.0
DEFAULT_SAFETY_FACTOR = 1.5
DEFAULT_BOUND_FLOOR = 1e-3
DEFAULT_REJECTION_LIMIT = 5


def _wrap_phase_delta(delta: np.ndarray) -> np.ndarray:
    # signed shortest difference on the phase circle, in [-50, 50)
    return np.mod(delta + PHASE_PERIOD / 2, PHASE_PERIOD) - PHASE_PERIOD / 2


@dataclass(frozen=True)
class LipschitzBounds:
    bounds: np.ndarray  # per output dimension, units per second
    safety_factor: float = DEFAULT_SAFETY_FACTOR

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (len(OUTPUT_NAMES),) or not np.all(b > 0):
            raise InvalidArgumentError("need four strictly positive bounds")
        object.__setattr__(self, "bounds", b)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(OUTPUT_NAMES, self.bounds.tolist()))


def estimate_lipschitz_bounds(
    dataset: Dataset,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    floor: float = DEFAULT_BOUND_FLOOR,
) -> LipschitzBounds:
    """``safety_factor`` times the steepest label slope between adjacent samples of one trial."""
    if safety_factor < 1:
        raise InvalidArgumentError("safety_factor must be >= 1")
    trial = dataset.trial_ids()
    same = trial[1:] == trial[:-1] if len(trial) > 1 else np.zeros(0, dtype=bool)
    if not same.any():
        raise InvalidArgumentError("no trial has two or more samples")
    y = dataset.outputs
    dy = np.diff(y, axis=0)
    dy[:, PHASE_INDEX] = _wrap_phase_delta(dy[:, PHASE_INDEX])
    dt = np.diff(dataset.time)
    slopes = np.abs(dy[same]) / dt[same, None]
    raw = slopes.max(axis=0)
    return LipschitzBounds(np.maximum(safety_factor * raw, floor), safety_factor)


@dataclass
class FilterState:
    bounds: np.ndarray
    rejection_limit: int = DEFAULT_REJECTION_LIMIT
    last: np.ndarray | None = None
    last_time: float | None = None
    rejections: np.ndarray = field(default_factory=lambda: np.zeros(len(OUTPUT_NAMES), dtype=int))
    # outcome of the most recent step, per dimension
    clamped: np.ndarray = field(default_factory=lambda: np.zeros(len(OUTPUT_NAMES), dtype=bool))
    reacquired: np.ndarray = field(default_factory=lambda: np.zeros(len(OUTPUT_NAMES), dtype=bool))

    @classmethod
    def start(cls, bounds: LipschitzBounds, rejection_limit: int = DEFAULT_REJECTION_LIMIT) -> "FilterState":
        if rejection_limit < 0:
            raise InvalidArgumentError("rejection_limit must be >= 0")
        return cls(np.asarray(bounds.bounds, dtype=float).copy(), rejection_limit)


def filter_step(state: FilterState, raw_output, timestamp: float) -> tuple[np.ndarray, FilterState]:
    """Filter one 4-vector; mutates and returns ``state``."""
    raw = np.asarray(raw_output, dtype=float)
    if raw.shape != (len(OUTPUT_NAMES),):
        raise InvalidArgumentError("raw output must be a 4-vector (v, p, alpha, dalpha)")
    if state.last is None:
        state.last = raw.copy()
        state.last_time = float(timestamp)
        state.clamped[:] = False
        state.reacquired[:] = False
        return raw.copy(), state

    dt = float(timestamp) - state.last_time
    if not dt > 0:
        raise InvalidArgumentError(f"timestamp {timestamp} does not advance past {state.last_time}")
    delta = raw - state.last
    delta[PHASE_INDEX] = _wrap_phase_delta(delta[PHASE_INDEX])
    cap = state.bounds * dt
    over = np.abs(delta) > cap
    reacquire = over & (state.rejections >= state.rejection_limit)
    clamp = over & ~reacquire

    out = raw.copy()
    out[clamp] = state.last[clamp] + np.clip(delta[clamp], -cap[clamp], cap[clamp])
    if clamp[PHASE_INDEX]:
        out[PHASE_INDEX] = np.mod(out[PHASE_INDEX], PHASE_PERIOD)

    state.rejections = np.where(clamp, state.rejections + 1, 0)
    state.clamped = clamp
    state.reacquired = reacquire
    state.last = out.copy()
    state.last_time = float(timestamp)
    return out, state


def filter_trace(times, outputs, bounds: LipschitzBounds, rejection_limit: int = DEFAULT_REJECTION_LIMIT):
    """Run :func:`filter_step` over a whole ``(n, 4)`` trace.

    Returns (filtered, clamped, reacquired) with the masks shaped like ``outputs``.
    """
    outputs = np.asarray(outputs, dtype=float)
    state = FilterState.start(bounds, rejection_limit)
    filtered = np.empty_like(outputs)
    clamped = np.zeros(outputs.shape, dtype=bool)
    reacquired = np.zeros(outputs.shape, dtype=bool)
    for i, (t, row) in enumerate(zip(times, outputs)):
        filtered[i], _ = filter_step(state, row, t)
        clamped[i] = state.clamped
        reacquired[i] = state.reacquired
    return filtered, clamped, reacquired


def lipschitz_excess(times, outputs, bounds: LipschitzBounds, skip=None) -> float:
    """Largest ``|dy| - L*dt`` over adjacent ticks (<= 0 means the cone holds).

    Ticks flagged in ``skip`` (an ``(n, 4)`` mask, e.g. re-acquisitions) are
    exempt on the step that lands on them.
    """
    y = np.asarray(outputs, dtype=float)
    dy = np.diff(y, axis=0)
    dy[:, PHASE_INDEX] = _wrap_phase_delta(dy[:, PHASE_INDEX])
    dt = np.diff(np.asarray(times, dtype=float))
    excess = np.abs(dy) - bounds.bounds * dt[:, None]
    if skip is not None:
        excess = np.where(np.asarray(skip)[1:], -np.inf, excess)
    return float(excess.max()) if excess.size else -np.inf


@dataclass
class StreamResult:
    time: np.ndarray
    raw: np.ndarray
    filtered: np.ndarray
    clamped: np.ndarray
    reacquired: np.ndarray
    latency_us: np.ndarray

    def to_csv(self) -> str:
        lines = ["time_s,v_hat,p_hat,alpha_hat,dalpha_hat,latency_us,rejected_dims"]
        for i in range(self.time.size):
            dims = "|".join(n for n, c in zip(OUTPUT_NAMES, self.clamped[i]) if c)
            v, p, a, da = self.filtered[i]
            lines.append(
                f"{self.time[i]:.6f},{v:.10g},{p:.10g},{a:.10g},{da:.10g},"
                f"{self.latency_us[i]:.1f},{dims}"
            )
        return "\n".join(lines) + "\n"


def run_stream(
    network: BranchedNetwork,
    normalizer: Normalizer,
    imu_trace,
    bounds: LipschitzBounds,
    rate_hz: float = 100.0,
    rejection_limit: int = DEFAULT_REJECTION_LIMIT,
    corrupt=None,
) -> StreamResult:
    """Normalize, evaluate and filter one tick at a time.

    ``imu_trace`` is a :class:`Dataset` (its clock is used) or an ``(n, 6)``
    array sampled at ``rate_hz``. ``corrupt`` is an optional ``(n, 4)`` array
    added to the raw network output before filtering, for fault injection.
    Latency covers normalize + forward + filter for each tick.
    """
    if not rate_hz > 0:
        raise InvalidArgumentError("rate_hz must be > 0")
    if isinstance(imu_trace, Dataset):
        imu = imu_trace.imu
        times = imu_trace.time
        step = np.diff(times)
        if step.size and np.any(np.abs(step - 1.0 / rate_hz) > 1e-6 / rate_hz):
            raise InvalidArgumentError("trace timestamps are not uniform at 1/rate_hz")
    else:
        imu = np.asarray(imu_trace, dtype=float)
        times = np.arange(imu.shape[0]) / rate_hz
    n = imu.shape[0]
    offsets = np.zeros((n, len(OUTPUT_NAMES))) if corrupt is None else np.asarray(corrupt, dtype=float)

    state = FilterState.start(bounds, rejection_limit)
    raw = np.empty((n, len(OUTPUT_NAMES)))
    filtered = np.empty_like(raw)
    clamped = np.zeros(raw.shape, dtype=bool)
    reacquired = np.zeros(raw.shape, dtype=bool)
    latency = np.empty(n)
    for i in range(n):
        t0 = time.perf_counter_ns()
        x = apply_normalizer(normalizer, imu[i])
        y = predict(network, x[None, :])[0] + offsets[i]
        y[PHASE_INDEX] = np.mod(y[PHASE_INDEX], PHASE_PERIOD)
        out, _ = filter_step(state, y, times[i])
        latency[i] = (time.perf_counter_ns() - t0) / 1e3
        raw[i] = y
        filtered[i] = out
        clamped[i] = state.clamped
        reacquired[i] = state.reacquired
    return StreamResult(np.asarray(times, dtype=float), raw, filtered, clamped, reacquired, latency)


def read_stream_csv(text: str) -> StreamResult:
    """Parse the stream output CSV back into arrays (raw outputs are not stored)."""
    lines = text.splitlines()
    if not lines or lines[0] != "time_s,v_hat,p_hat,alpha_hat,dalpha_hat,latency_us,rejected_dims":
        raise InvalidArgumentError("not a stream output CSV")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    t = np.array([float(r[0]) for r in rows])
    y = np.array([[float(x) for x in r[1:5]] for r in rows]).reshape(-1, 4)
    lat = np.array([float(r[5]) for r in rows])
    clamped = np.array([[name in r[6].split("|") for name in OUTPUT_NAMES] for r in rows], dtype=bool).reshape(-1, 4)
    return StreamResult(t, y.copy(), y, clamped, np.zeros_like(clamped), lat)
