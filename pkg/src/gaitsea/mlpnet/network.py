"""Two-stage ReLU network: IMU -> (speed, phase) -> (ankle angle, ankle rate).

Weights follow the ``W @ x + b`` convention with ``W`` shaped (out, in);
batches are row-major ``(n, features)`` so a layer evaluates ``X @ W.T + b``.
Every hidden linear layer is followed by a ReLU; the two output layers are
linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError

PHASE_PERIOD = 100.0


@dataclass(frozen=True)
class NetworkConfig:
    input_width: int = 6
    hidden_width: int = 64
    hidden_per_stage: tuple[int, int] = (6, 6)
    middle_width: int = 2
    final_width: int = 2
    seed: int = 0
    # feed the last stage-1 hidden activation to stage 2 alongside (V, P)
    stage2_hidden_features: bool = False
    # "sincos": phase regressed as (cos, sin) of the cycle angle; "raw": percent
    phase_encoding: str = "sincos"

    def __post_init__(self):
        widths = (self.input_width, self.hidden_width, self.middle_width, self.final_width)
        if min(widths) < 1 or min(self.hidden_per_stage) < 1 or len(self.hidden_per_stage) != 2:
            raise InvalidArgumentError("all widths and per-stage hidden counts must be >= 1")
        if self.phase_encoding not in ("raw", "sincos"):
            raise InvalidArgumentError(f"unknown phase_encoding {self.phase_encoding!r}")
        if self.phase_encoding == "sincos" and self.middle_width != 2:
            raise InvalidArgumentError("sincos phase encoding needs middle_width == 2 (V, P)")

    @property
    def middle_units(self) -> int:
        """Width of the middle output layer (one extra unit for cos/sin phase)."""
        return self.middle_width + (1 if self.phase_encoding == "sincos" else 0)

    def layer_shapes(self) -> list[tuple[int, int]]:
        h = self.hidden_width
        n1, n2 = self.hidden_per_stage
        shapes = [(h, self.input_width)] + [(h, h)] * (n1 - 1) + [(self.middle_units, h)]
        stage2_in = self.middle_units + (h if self.stage2_hidden_features else 0)
        shapes += [(h, stage2_in)] + [(h, h)] * (n2 - 1) + [(self.final_width, h)]
        return shapes

    def layer_names(self) -> list[str]:
        """The 27-entry layer listing for the default topology (input, linear/relu pairs, outputs)."""
        n1, n2 = self.hidden_per_stage
        names = ["input"]
        names += ["hidden", "relu"] * n1 + ["middle_output"]
        names += ["hidden", "relu"] * n2 + ["final_output"]
        return names


@dataclass(eq=False)
class BranchedNetwork:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n_stage1: int  # linear layers in stage 1, middle output layer included
    stage2_hidden_features: bool = False
    phase_encoding: str = "raw"
    middle_width: int = field(init=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not 1 <= self.n_stage1 < len(self.weights):
            raise InvalidArgumentError("inconsistent layer lists")
        self.middle_width = self.weights[self.n_stage1 - 1].shape[0]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidArgumentError(f"layer {k}: bias length must equal weight rows")
        for k in range(1, len(self.weights)):
            expected = self.weights[k - 1].shape[0]
            if k == self.n_stage1 and self.stage2_hidden_features:
                expected += self.weights[k - 2].shape[0] if k >= 2 else self.weights[0].shape[1]
            if self.weights[k].shape[1] != expected:
                raise InvalidArgumentError(
                    f"layer {k}: expects {self.weights[k].shape[1]} inputs, chain provides {expected}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays, weights first then biases (the serialization order)."""
        return [*self.weights, *self.biases]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "BranchedNetwork":
        return BranchedNetwork(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.n_stage1,
            self.stage2_hidden_features,
            self.phase_encoding,
        )


def init_network(config: NetworkConfig = NetworkConfig()) -> BranchedNetwork:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for rows, cols in config.layer_shapes():
        bound = np.sqrt(6.0 / cols)
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return BranchedNetwork(
        weights,
        biases,
        n_stage1=config.hidden_per_stage[0] + 1,
        stage2_hidden_features=config.stage2_hidden_features,
        phase_encoding=config.phase_encoding,
    )


def _forward_cache(net: BranchedNetwork, x: np.ndarray):
    """Forward pass keeping what backprop needs.

    Returns (layer_inputs, pre_activations, middle, final) where
    ``layer_inputs[k]`` is the array fed to linear layer ``k``.
    """
    inputs, pre = [], []
    h = x
    last_hidden = x
    middle = None
    n = net.n_layers
    for k in range(n):
        if k == net.n_stage1:
            h = np.hstack([middle, last_hidden]) if net.stage2_hidden_features else middle
        inputs.append(h)
        a = h @ net.weights[k].T + net.biases[k]
        pre.append(a)
        if k == net.n_stage1 - 1:
            middle = a
        elif k == n - 1:
            return inputs, pre, middle, a
        else:
            h = np.maximum(a, 0.0)
            last_hidden = h
    raise AssertionError("unreachable")


def forward_batch(net: BranchedNetwork, x) -> tuple[np.ndarray, np.ndarray]:
    """Raw (middle, final) outputs for an ``(n, input_width)`` batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise InvalidArgumentError(f"expected an (n, {net.input_width}) batch, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("non-finite network input")
    _, _, middle, final = _forward_cache(net, x)
    return middle, final


def forward(net: BranchedNetwork, x) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate one input vector; returns the raw (middle, final) output vectors."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_width,):
        raise InvalidArgumentError(f"expected a {net.input_width}-vector, got shape {x.shape}")
    middle, final = forward_batch(net, x[None, :])
    return middle[0], final[0]


def encode_middle(middle_targets: np.ndarray, phase_encoding: str) -> np.ndarray:
    """Map (V, P%) targets onto the middle layer's output space."""
    if phase_encoding == "raw":
        return middle_targets
    angle = 2.0 * np.pi * middle_targets[:, 1] / PHASE_PERIOD
    return np.column_stack([middle_targets[:, 0], np.cos(angle), np.sin(angle)])


def decode_middle(middle: np.ndarray, phase_encoding: str) -> np.ndarray:
    """Map raw middle outputs back to (V, P%) with P wrapped into [0, 100)."""
    if phase_encoding == "raw":
        speed, phase = middle[:, 0], middle[:, 1]
    else:
        speed = middle[:, 0]
        phase = np.arctan2(middle[:, 2], middle[:, 1]) * PHASE_PERIOD / (2.0 * np.pi)
    phase = np.mod(phase, PHASE_PERIOD)
    phase = np.where(phase >= PHASE_PERIOD, 0.0, phase)
    return np.column_stack([speed, phase])


def predict(net: BranchedNetwork, x) -> np.ndarray:
    """``(n, 4)`` predictions (V, P, alpha, dalpha) for standardized inputs."""
    middle, final = forward_batch(net, np.atleast_2d(x))
    return np.hstack([decode_middle(middle, net.phase_encoding), final])


def loss(pred_middle, pred_final, target_middle, target_final, lambda_mid=1.0, lambda_fin=1.0):
    """Mean squared error per output group and their weighted sum."""
    pm, pf = np.asarray(pred_middle, float), np.asarray(pred_final, float)
    tm, tf = np.asarray(target_middle, float), np.asarray(target_final, float)
    if pm.shape != tm.shape or pf.shape != tf.shape:
        raise InvalidArgumentError("prediction and target shapes differ")
    loss_mid = float(np.mean((pm - tm) ** 2))
    loss_fin = float(np.mean((pf - tf) ** 2))
    return loss_mid, loss_fin, lambda_mid * loss_mid + lambda_fin * loss_fin


def backward(
    net: BranchedNetwork,
    x,
    target_middle,
    target_final,
    lambda_mid: float = 1.0,
    lambda_fin: float = 1.0,
):
    """Exact gradients of the weighted total loss on one batch.

    ``target_middle`` must already be in the middle layer's encoding (see
    :func:`encode_middle`). Returns ``(grads, (loss_mid, loss_fin, total))``
    with ``grads`` ordered like :meth:`BranchedNetwork.parameters`.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidArgumentError("backward needs a non-empty (n, features) batch")
    inputs, pre, middle, final = _forward_cache(net, x)
    tm = np.asarray(target_middle, float)
    tf = np.asarray(target_final, float)
    losses = loss(middle, final, tm, tf, lambda_mid, lambda_fin)

    n_layers = net.n_layers
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    m = net.middle_width

    delta = (2.0 * lambda_fin / final.size) * (final - tf)
    skip_grad = None
    for k in range(n_layers - 1, -1, -1):
        grad_w[k] = delta.T @ inputs[k]
        grad_b[k] = delta.sum(axis=0)
        if k == 0:
            break
        upstream = delta @ net.weights[k]
        if k == net.n_stage1:
            # stage boundary: split the gradient between middle output and skip features
            if net.stage2_hidden_features:
                skip_grad = upstream[:, m:]
                upstream = upstream[:, :m]
            delta = upstream + (2.0 * lambda_mid / middle.size) * (middle - tm)
            continue
        if skip_grad is not None and k == net.n_stage1 - 1:
            upstream = upstream + skip_grad
        delta = upstream * (pre[k - 1] > 0)
    return [*grad_w, *grad_b], losses
