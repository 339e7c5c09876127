from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from .network import BranchedNetwork


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-2
    epochs: int = 200
    batch_size: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # middle targets are O(1) while ankle-rate errors are O(100) deg/s; the
    # heavy middle weight keeps (V, P) from being repurposed as free features
    lambda_mid: float = 1e4
    lambda_fin: float = 1.0
    # False: L2 term added to the gradient (classic Adam); True: AdamW-style decay
    decoupled_weight_decay: bool = False
    # "constant" or "cosine" (anneals from learning_rate to min_learning_rate over the run)
    lr_schedule: str = "constant"
    min_learning_rate: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")
        if min(self.learning_rate, self.weight_decay, self.eps, self.lambda_mid, self.lambda_fin) < 0:
            raise InvalidArgumentError("learning rate, decay, eps and loss weights must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidArgumentError("Adam betas must lie in [0, 1)")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidArgumentError(f"unknown lr_schedule {self.lr_schedule!r}")

    def learning_rate_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        if self.lr_schedule == "constant" or self.epochs == 1:
            return self.learning_rate
        frac = (epoch - 1) / (self.epochs - 1)
        lo = self.min_learning_rate
        return lo + 0.5 * (self.learning_rate - lo) * (1.0 + math.cos(math.pi * frac))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_update(
    params,
    grads,
    state: AdamState,
    hyper: TrainHyper,
    step_index: int,
    learning_rate: float | None = None,
) -> AdamState:
    """One bias-corrected Adam step, updating ``params`` in place."""
    if step_index < 1:
        raise InvalidArgumentError("step_index starts at 1")
    b1, b2 = hyper.beta1, hyper.beta2
    lr = hyper.learning_rate if learning_rate is None else learning_rate
    wd = hyper.weight_decay
    c1 = 1.0 - b1**step_index
    c2 = 1.0 - b2**step_index
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if wd and not hyper.decoupled_weight_decay:
            g = g + wd * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if wd and hyper.decoupled_weight_decay:
            p -= lr * wd * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    state.step = step_index
    return state


def adam_step(net: BranchedNetwork, grads, state: AdamState | None, hyper: TrainHyper, step_index: int):
    """Apply one Adam step to ``net`` (in place) and return ``(net, state)``."""
    params = net.parameters()
    if state is None:
        state = AdamState.zeros_like(params)
    adam_update(params, grads, state, hyper, step_index)
    return net, state
