"""Single ensemble members: feature-bagged networks trained toward a
constant output of 1 and scored by deviation from their center.

The surrogate idea in general: a learnable f approximates a fixed target
pattern g on normal data, and a sample's anomaly score is ||f(x) - g(x)||.
Only the constant-one target has a shipped training path; the identity and
constant-vector targets exist as values for callers wiring their own.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import nn
from .data import Dataset
from .rng import generator, mix64

# internal stream indices for per-submodel randomness
_STREAM_MASK = 1
_STREAM_INIT = 2
_STREAM_SHUFFLE = 3


@dataclass(frozen=True)
class SurrogateTarget:
    """Target pattern: 'constant-one', 'constant-c' (with c), or 'identity'."""

    tag: str
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tag not in ("constant-one", "constant-c", "identity"):
            raise ValueError(f"unknown surrogate target {self.tag!r}")
        if self.tag == "constant-c" and self.c is None:
            raise ValueError("constant-c target needs the constant vector")


CONSTANT_ONE = SurrogateTarget("constant-one")


def surrogate_score(f_output, target: SurrogateTarget, x=None) -> float:
    """Euclidean deviation ||f_output - g(x)|| of an output from the target."""
    f_output = np.atleast_1d(np.asarray(f_output, dtype=np.float64))
    if target.tag == "identity":
        if x is None:
            raise ValueError("identity target needs the input x")
        g = np.atleast_1d(np.asarray(x, dtype=np.float64))
    elif target.tag == "constant-c":
        g = np.atleast_1d(np.asarray(target.c, dtype=np.float64))
    else:
        g = np.ones_like(f_output)
    if f_output.shape != g.shape:
        raise ValueError(
            f"output has shape {f_output.shape}, target value {g.shape}")
    return float(np.linalg.norm(f_output - g))


@dataclass(frozen=True)
class FeatureMask:
    indices: np.ndarray
    source_dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.size == 0:
            raise ValueError("empty feature mask")
        if np.any(idx < 0) or np.any(idx >= self.source_dim):
            raise ValueError("mask index out of range")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("mask indices must be sorted and distinct")

    def __len__(self) -> int:
        return int(self.indices.size)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.source_dim:
            raise ValueError(
                f"data has {X.shape[-1]} columns, mask expects {self.source_dim}")
        return np.ascontiguousarray(X[..., self.indices])


def sample_feature_bag(source_dim, bag_size, seed) -> FeatureMask:
    """Uniform sample of bag_size distinct columns, sorted; all columns when
    the data has no more than bag_size of them."""
    if source_dim < 1 or bag_size < 1:
        raise ValueError("source_dim and bag_size must be >= 1")
    if source_dim <= bag_size:
        return FeatureMask(np.arange(source_dim, dtype=np.int64), source_dim)
    rng = generator(seed, _STREAM_MASK)
    idx = np.sort(rng.choice(source_dim, size=bag_size, replace=False))
    return FeatureMask(idx.astype(np.int64), source_dim)


@dataclass
class Submodel:
    net: nn.Mlp
    mask: FeatureMask
    q: float
    seed: int

    def __post_init__(self):
        if self.net.input_dim != len(self.mask):
            raise ValueError("network input width must match the mask length")
        if self.net.output_dim != 1:
            raise ValueError("submodels are single-output")
        if not np.isfinite(self.q):
            raise ValueError("center q must be finite")


def train_submodel(train: Dataset, bag_size, arch, tconfig: nn.TrainConfig,
                   seed, *, groups=None, fair_theta=0.0) -> Submodel:
    """Train one member on its feature bag against the constant target 1.

    The mask, weight init and epoch shuffling each use their own stream
    derived from seed, so a submodel is a pure function of
    (train, bag_size, arch, tconfig, seed).  The center q is the mean
    output of the returned (best) weights over the full training set.
    """
    if train.rows < 1:
        raise ValueError("empty training data")
    mask = sample_feature_bag(train.cols, bag_size, seed)
    net = nn.dean_mlp(len(mask), arch, mix64(seed, _STREAM_INIT))
    cfg = replace(tconfig, seed=mix64(seed, _STREAM_SHUFFLE))
    X = mask.apply(train.values)
    net, _ = nn.train(net, X, cfg, target=1.0, groups=groups,
                      fair_theta=fair_theta)
    q = float(nn.forward(net, X)[:, 0].mean())
    return Submodel(net, mask, q, seed)


def submodel_score(sub: Submodel, x) -> np.ndarray:
    """|f(x restricted to the mask) - q| per row; a 1-D x scores one row."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    out = nn.forward(sub.net, sub.mask.apply(x))[:, 0]
    scores = np.abs(out - sub.q)
    return float(scores[0]) if single else scores


def submodel_outputs(sub: Submodel, x) -> np.ndarray:
    """Raw network outputs on masked rows (before centering)."""
    x = np.asarray(x, dtype=np.float64)
    return nn.forward(sub.net, sub.mask.apply(x))[:, 0]
