"""Minimal multilayer perceptron with analytic backprop and Adam.

Layers hold an (out, in) weight matrix, an optional bias vector and an
activation tag ("relu", "selu" or "identity").  Training targets a scalar
per row (a constant for one-class anomaly training, per-row values for
plain regression) and monitors the full-training-set loss for early
stopping with best-weights restore.

All heavy lifting happens in the packed kernels of ``dean._kernels``;
values here are plain numpy and immutable from the caller's perspective.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import NumericError
from .rng import mix64

ACTIVATIONS = ("relu", "selu", "identity")
_ACT_CODE = {"relu": K.ACT_RELU, "selu": K.ACT_SELU, "identity": K.ACT_IDENTITY}
_LOSS_CODE = {"squared": K.LOSS_SQUARED, "absolute": K.LOSS_ABSOLUTE}
BIAS_POLICIES = ("all", "none", "all-but-last")

SELU_LAMBDA = K.SELU_LAMBDA
SELU_ALPHA = K.SELU_ALPHA


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: Optional[np.ndarray]  # (out,) or None
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not np.all(np.isfinite(self.weights)):
            raise NumericError("non-finite layer weights")
        if self.bias is not None and not np.all(np.isfinite(self.bias)):
            raise NumericError("non-finite layer bias")


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise ValueError("adjacent layer dimensions are incompatible")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


@dataclass
class TrainConfig:
    epochs: int = 50
    patience: int = 10
    learning_rate: float = 0.0001
    batch_size: int = 512
    loss: str = "squared"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in _LOSS_CODE:
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class AdamState:
    """Flat moment accumulators in packed parameter order."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    beta1: float = field(default=0.9, init=False)
    beta2: float = field(default=0.999, init=False)
    eps: float = field(default=1e-8, init=False)


class _Packed:
    """Flat-vector view of an Mlp for the kernels."""

    __slots__ = ("theta", "sizes", "acts", "has_bias", "w_off", "b_off")

    def __init__(self, mlp: Mlp):
        sizes = [mlp.layers[0].weights.shape[1]]
        sizes += [lay.weights.shape[0] for lay in mlp.layers]
        self.sizes = np.array(sizes, dtype=np.int64)
        self.acts = np.array([_ACT_CODE[lay.activation] for lay in mlp.layers],
                             dtype=np.int64)
        self.has_bias = np.array([1 if lay.bias is not None else 0
                                  for lay in mlp.layers], dtype=np.int64)
        self.w_off, self.b_off, n_params = K.layout(self.sizes, self.has_bias)
        theta = np.empty(n_params, dtype=np.float64)
        for l, lay in enumerate(mlp.layers):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            # kernels use (in, out) row-major blocks
            theta[self.w_off[l]:self.w_off[l] + n_in * n_out] = lay.weights.T.ravel()
            if lay.bias is not None:
                theta[self.b_off[l]:self.b_off[l] + n_out] = lay.bias
        self.theta = theta

    def kernel_args(self):
        return self.sizes, self.acts, self.has_bias, self.w_off, self.b_off

    def unpack(self, theta=None) -> Mlp:
        theta = self.theta if theta is None else theta
        layers = []
        for l in range(len(self.sizes) - 1):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            W = theta[self.w_off[l]:self.w_off[l] + n_in * n_out]
            W = np.ascontiguousarray(W.reshape(n_in, n_out).T)
            bias = None
            if self.has_bias[l]:
                bias = theta[self.b_off[l]:self.b_off[l] + n_out].copy()
            layers.append(Layer(W, bias, ACTIVATIONS[self.acts[l]]))
        return Mlp(layers)

    def split_flat(self, flat):
        """Flat vector -> per-layer [(dW (out,in), db or None), ...]."""
        out = []
        for l in range(len(self.sizes) - 1):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            W = flat[self.w_off[l]:self.w_off[l] + n_in * n_out]
            W = np.ascontiguousarray(W.reshape(n_in, n_out).T)
            b = None
            if self.has_bias[l]:
                b = flat[self.b_off[l]:self.b_off[l] + n_out].copy()
            out.append((W, b))
        return out

    def join_flat(self, structured):
        """Per-layer [(dW (out,in), db or None), ...] -> flat vector."""
        flat = np.zeros_like(self.theta)
        for l, (W, b) in enumerate(structured):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            flat[self.w_off[l]:self.w_off[l] + n_in * n_out] = np.asarray(W).T.ravel()
            if b is not None:
                flat[self.b_off[l]:self.b_off[l] + n_out] = b
        return flat


def init_mlp(layer_sizes, bias_policy, activations, seed) -> Mlp:
    """Glorot-uniform network with zero biases, deterministic in seed.

    Weights are drawn layer by layer from U(-sqrt(6/(fan_in+fan_out)), +...)
    using a single PCG64 stream, so the draw sequence does not depend on
    the bias policy.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output width")
    if any(s < 1 for s in layer_sizes):
        raise ValueError("zero-width layer")
    n_layers = len(layer_sizes) - 1
    if len(activations) != n_layers:
        raise ValueError("one activation per layer required")
    if bias_policy not in BIAS_POLICIES:
        raise ValueError(f"unknown bias policy {bias_policy!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for l in range(n_layers):
        fan_in, fan_out = layer_sizes[l], layer_sizes[l + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        with_bias = bias_policy == "all" or (
            bias_policy == "all-but-last" and l < n_layers - 1)
        bias = np.zeros(fan_out) if with_bias else None
        layers.append(Layer(W, bias, activations[l]))
    return Mlp(layers)


def dean_mlp(input_dim, hidden, seed) -> Mlp:
    """Network under the one-class policy: relu+bias hidden stack, single
    selu output without bias."""
    sizes = [input_dim] + list(hidden) + [1]
    acts = ["relu"] * len(hidden) + ["selu"]
    return init_mlp(sizes, "all-but-last", acts, seed)


def _as_batch(mlp: Mlp, batch) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(batch, dtype=np.float64))
    if X.ndim != 2:
        raise ValueError("batch must be a 2-D matrix")
    if X.shape[1] != mlp.input_dim:
        raise ValueError(
            f"batch has {X.shape[1]} columns, network expects {mlp.input_dim}")
    return X


def _as_target(target, n) -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 0:
        return np.full(n, float(t))
    if t.shape != (n,):
        raise ValueError("target must be a scalar or one value per row")
    return np.ascontiguousarray(t)


def forward(mlp: Mlp, batch) -> np.ndarray:
    """Network outputs for a batch, shape (n, output_dim)."""
    X = _as_batch(mlp, batch)
    p = _Packed(mlp)
    return K.forward_batch(p.theta, *p.kernel_args(), X)


def loss_and_gradients(mlp: Mlp, batch, target, loss="squared"):
    """Mean loss against the target plus per-layer gradients.

    Returns (loss, [(dW, db or None), ...]) with dW shaped like the layer
    weights.  The absolute loss uses subgradient 0 at the kink.
    """
    if mlp.output_dim != 1:
        raise ValueError("loss is defined for single-output networks")
    X = _as_batch(mlp, batch)
    t = _as_target(target, X.shape[0])
    p = _Packed(mlp)
    groups = np.zeros(X.shape[0], dtype=np.int64)
    loss_val, grad = K.loss_grad(p.theta, *p.kernel_args(), X, t, groups,
                                 0.0, _LOSS_CODE[loss])
    if not np.isfinite(loss_val):
        raise NumericError("non-finite loss")
    return float(loss_val), p.split_flat(grad)


def init_adam_state(mlp: Mlp) -> AdamState:
    p = _Packed(mlp)
    n = p.theta.shape[0]
    return AdamState(np.zeros(n), np.zeros(n), 0)


def adam_step(mlp: Mlp, grads, state: AdamState, lr: float):
    """One Adam update. Returns (new Mlp, new AdamState); inputs untouched."""
    p = _Packed(mlp)
    flat_grad = p.join_flat(grads)
    if state.first_moment.shape != p.theta.shape:
        raise ValueError("Adam state does not match network parameters")
    theta = p.theta.copy()
    m = state.first_moment.copy()
    v = state.second_moment.copy()
    step = state.step + 1
    K.adam_update(theta, flat_grad, m, v, step, lr)
    return p.unpack(theta), AdamState(m, v, step)


def train(mlp: Mlp, train_data, config: TrainConfig, *, target=1.0,
          groups=None, fair_theta=0.0):
    """Minibatch-train toward the target; returns (best Mlp, loss history).

    Each epoch visits a fresh deterministic permutation derived from
    (config.seed, epoch).  history[e] is the full-training-set loss after
    epoch e; training stops once that loss has not improved for
    config.patience consecutive epochs, and the snapshot with the lowest
    recorded loss is returned.

    groups/fair_theta enable the group-mean output penalty used by
    fairness-aware training; fair_theta=0 disables it.
    """
    if mlp.output_dim != 1:
        raise ValueError("training is defined for single-output networks")
    X = _as_batch(mlp, train_data)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training data")
    t = _as_target(target, n)
    if groups is None:
        g = np.zeros(n, dtype=np.int64)
    else:
        g = np.ascontiguousarray(np.asarray(groups, dtype=np.int64))
        if g.shape != (n,):
            raise ValueError("groups must have one entry per row")
    loss_kind = _LOSS_CODE[config.loss]
    batch = min(config.batch_size, n)

    p = _Packed(mlp)
    theta = p.theta
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    history = []
    best_loss = np.inf
    best_theta = theta.copy()
    stale = 0
    for epoch in range(config.epochs):
        perm = np.random.default_rng(mix64(config.seed, epoch)).permutation(n)
        step = K.run_epoch(theta, m, v, step, *p.kernel_args(), X, t, g,
                           fair_theta, perm, batch, config.learning_rate,
                           loss_kind)
        loss = float(K.loss_value(theta, *p.kernel_args(), X, t, g,
                                  fair_theta, loss_kind))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_theta = theta.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience and stale > 0:
                break
    return p.unpack(best_theta), history


def grad_check(mlp: Mlp, batch, target, eps=1e-5) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    Uses the squared loss; relative error is |a-n| / max(|a|, |n|, 1e-12).
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    X = _as_batch(mlp, batch)
    t = _as_target(target, X.shape[0])
    p = _Packed(mlp)
    groups = np.zeros(X.shape[0], dtype=np.int64)
    args = p.kernel_args()
    _, grad = K.loss_grad(p.theta, *args, X, t, groups, 0.0, K.LOSS_SQUARED)
    worst = 0.0
    theta = p.theta
    for i in range(theta.shape[0]):
        keep = theta[i]
        theta[i] = keep + eps
        up = K.loss_value(theta, *args, X, t, groups, 0.0, K.LOSS_SQUARED)
        theta[i] = keep - eps
        down = K.loss_value(theta, *args, X, t, groups, 0.0, K.LOSS_SQUARED)
        theta[i] = keep
        numeric = (up - down) / (2.0 * eps)
        denom = max(abs(grad[i]), abs(numeric), 1e-12)
        worst = max(worst, abs(grad[i] - numeric) / denom)
    return worst
