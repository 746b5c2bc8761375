"""Ensemble orchestration: parallel training, power aggregation, subsets
for growth curves, and JSON persistence.

The ensemble score of a row is the weighted mean of the members' centered
deviations raised to an integer power:

    score(x) = sum_i w_i * |f_i(x) - q_i|^power / sum_i w_i

with all-ones weights this is the plain power mean over members.  Member i
is seeded by a splitmix64 mix of (master_seed, i), so results are
byte-identical no matter how many threads train the ensemble.
"""

import contextlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    def threadpool_limits(limits=None):
        return contextlib.nullcontext()

from . import nn
from .data import Dataset, LabeledDataset, ScalerParams, apply_standardizer, fit_standardizer
from .errors import ModelFormatError
from .rng import mix64
from .submodel import FeatureMask, Submodel, submodel_outputs, train_submodel

FORMAT_NAME = "dean-ensemble"
FORMAT_VERSION = 1


@dataclass
class EnsembleConfig:
    n_submodels: int = 100
    bag_size: int = 200
    hidden: tuple = (255, 255, 255)
    power: int = 9
    tconfig: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    master_seed: int = 0
    threads: Optional[int] = None  # None: use available parallelism

    def __post_init__(self):
        if self.n_submodels < 1:
            raise ValueError("n_submodels must be >= 1")
        if self.power < 1:
            raise ValueError("power must be >= 1")
        if self.bag_size < 1:
            raise ValueError("bag_size must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class Ensemble:
    submodels: list
    power: int
    weights: np.ndarray
    scaler: ScalerParams
    config_echo: Optional[EnsembleConfig] = None

    def __post_init__(self):
        if not self.submodels:
            raise ValueError("ensemble needs at least one submodel")
        dims = {s.mask.source_dim for s in self.submodels}
        if len(dims) != 1:
            raise ValueError("all submodels must share the source dimension")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.submodels),):
            raise ValueError("one weight per submodel required")
        if np.any(self.weights < 0) or self.weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")

    @property
    def source_dim(self) -> int:
        return self.submodels[0].mask.source_dim

    def __len__(self) -> int:
        return len(self.submodels)


def _effective_rows(train) -> tuple:
    """(values, groups) of the rows used for training: label-0 only when
    labels are present (one-class setting)."""
    if isinstance(train, Dataset):
        return train.values, None
    if train.labels is not None:
        keep = train.labels == 0
        values = train.data.values[keep]
        groups = train.groups[keep] if train.groups is not None else None
    else:
        values = train.data.values
        groups = train.groups
    return values, groups


def train_ensemble(train, config: EnsembleConfig, *, fair_theta=0.0,
                   progress=None) -> Ensemble:
    """Train config.n_submodels members on the normal rows of train.

    Accepts a Dataset or a LabeledDataset; anomalous rows (label 1) are
    excluded from training.  The standardizer is fitted on the effective
    training rows and stored with the ensemble.  progress, if given, is
    called with (done, total) after each finished member.
    """
    values, groups = _effective_rows(train)
    if values.shape[0] == 0:
        raise ValueError("no training rows left after filtering anomalies")
    scaler = fit_standardizer(Dataset(values))
    standardized = Dataset(apply_standardizer(scaler, values))
    if fair_theta > 0.0 and groups is None:
        raise ValueError("fairness-regularized training needs group attributes")

    def one(i):
        return train_submodel(standardized, config.bag_size, config.hidden,
                              config.tconfig, mix64(config.master_seed, i),
                              groups=groups, fair_theta=fair_theta)

    n = config.n_submodels
    # BLAS pools fight the per-submodel threads on these small matmuls;
    # one BLAS thread per worker is strictly faster
    with threadpool_limits(limits=1):
        # first member trains synchronously, which also warms the jit cache
        subs = [one(0)]
        if progress:
            progress(1, n)
        if n > 1:
            workers = config.threads or os.cpu_count() or 1
            if workers <= 1:
                for i in range(1, n):
                    subs.append(one(i))
                    if progress:
                        progress(len(subs), n)
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    for sub in pool.map(one, range(1, n)):
                        subs.append(sub)
                        if progress:
                            progress(len(subs), n)
    return Ensemble(subs, config.power, np.ones(n), scaler, config)


def _raw_values(data) -> np.ndarray:
    if isinstance(data, LabeledDataset):
        return data.data.values
    if isinstance(data, Dataset):
        return data.values
    return np.asarray(data, dtype=np.float64)


def base_score_matrix(e: Ensemble, data) -> np.ndarray:
    """Per-member centered deviations |f_i(x) - q_i| as an (n, members) matrix.

    data is raw (unstandardized); the stored scaler is applied first.
    """
    X = apply_standardizer(e.scaler, _raw_values(data))
    cols = [np.abs(submodel_outputs(s, X) - s.q) for s in e.submodels]
    return np.column_stack(cols)


def scores_from_base(base: np.ndarray, power: int, weights) -> np.ndarray:
    """Aggregate a base-score matrix into ensemble scores."""
    w = np.asarray(weights, dtype=np.float64)
    return (base ** power) @ w / w.sum()


def ensemble_score(e: Ensemble, data) -> np.ndarray:
    """Weighted power-mean anomaly score per row of raw data."""
    X = apply_standardizer(e.scaler, _raw_values(data))
    acc = np.zeros(X.shape[0])
    for s, w in zip(e.submodels, e.weights):
        base = np.abs(submodel_outputs(s, X) - s.q)
        acc += w * base ** e.power
    return acc / e.weights.sum()


def subset(e: Ensemble, k: int) -> Ensemble:
    """First k submodels (training order) with their weights."""
    if not 1 <= k <= len(e):
        raise ValueError(f"k must be in [1, {len(e)}]")
    return Ensemble(e.submodels[:k], e.power, e.weights[:k].copy(), e.scaler,
                    e.config_echo)


def with_weights(e: Ensemble, weights) -> Ensemble:
    """Same members, new aggregation weights."""
    return Ensemble(list(e.submodels), e.power, np.asarray(weights, float),
                    e.scaler, e.config_echo)


# -- persistence --------------------------------------------------------
#
# Single UTF-8 JSON document; reals are printed with 17 significant digits
# so a float64 round-trips exactly.  The writer is hand-rolled to keep the
# byte output deterministic.


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_list(values) -> str:
    return "[" + ",".join(_fmt(v) for v in values) + "]"


def _int_list(values) -> str:
    return "[" + ",".join(str(int(v)) for v in values) + "]"


def dumps(e: Ensemble) -> str:
    out = [
        '{"format":"%s","version":%d' % (FORMAT_NAME, FORMAT_VERSION),
        ',"scaler":{"mean":%s,"std":%s}' % (_fmt_list(e.scaler.mean),
                                            _fmt_list(e.scaler.std)),
        ',"power":%d' % e.power,
        ',"weights":%s' % _fmt_list(e.weights),
        ',"submodels":[',
    ]
    for i, s in enumerate(e.submodels):
        if i:
            out.append(",")
        out.append('{"seed":%d,"mask":%s,"q":%s,"layers":['
                   % (s.seed, _int_list(s.mask.indices), _fmt(s.q)))
        for l, lay in enumerate(s.net.layers):
            if l:
                out.append(",")
            rows, cols = lay.weights.shape
            bias = "null" if lay.bias is None else _fmt_list(lay.bias)
            out.append('{"rows":%d,"cols":%d,"weights":%s,"bias":%s,'
                       '"activation":"%s"}'
                       % (rows, cols, _fmt_list(lay.weights.ravel()), bias,
                          lay.activation))
        out.append("]}")
    out.append("]}")
    return "".join(out)


def save(e: Ensemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(e))
        fh.write("\n")


def _require(cond, msg):
    if not cond:
        raise ModelFormatError(msg)


def _finite_floats(raw, what, n=None) -> np.ndarray:
    _require(isinstance(raw, list), f"{what} must be an array")
    if n is not None:
        _require(len(raw) == n, f"{what} must have {n} entries")
    arr = np.asarray(raw, dtype=np.float64)
    _require(arr.ndim == 1 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw),
        f"{what} must be an array of numbers")
    _require(bool(np.all(np.isfinite(arr))), f"non-finite value in {what}")
    return arr


def loads(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a valid model file: {exc}") from exc
    _require(isinstance(doc, dict), "top-level document must be an object")
    _require(doc.get("format") == FORMAT_NAME,
             f"unknown format {doc.get('format')!r}")
    version = doc.get("version")
    _require(version == FORMAT_VERSION,
             f"unsupported model version {version!r} (expected {FORMAT_VERSION})")
    scaler_doc = doc.get("scaler")
    _require(isinstance(scaler_doc, dict), "missing scaler object")
    mean = _finite_floats(scaler_doc.get("mean"), "scaler.mean")
    std = _finite_floats(scaler_doc.get("std"), "scaler.std", len(mean))
    _require(bool(np.all(std >= 1e-12)), "scaler.std entries must be >= 1e-12")
    power = doc.get("power")
    _require(isinstance(power, int) and power >= 1,
             "power must be a positive integer")
    raw_subs = doc.get("submodels")
    _require(isinstance(raw_subs, list) and raw_subs, "missing submodels")
    weights = _finite_floats(doc.get("weights"), "weights", len(raw_subs))
    source_dim = len(mean)

    subs = []
    for i, sd in enumerate(raw_subs):
        tag = f"submodels[{i}]"
        _require(isinstance(sd, dict), f"{tag} must be an object")
        _require(isinstance(sd.get("seed"), int), f"{tag}.seed must be an integer")
        mask_raw = sd.get("mask")
        _require(isinstance(mask_raw, list) and mask_raw and
                 all(isinstance(v, int) for v in mask_raw),
                 f"{tag}.mask must be an array of integers")
        q = sd.get("q")
        _require(isinstance(q, (int, float)) and math.isfinite(q),
                 f"{tag}.q must be a finite number")
        layers_raw = sd.get("layers")
        _require(isinstance(layers_raw, list) and layers_raw,
                 f"{tag}.layers must be a nonempty array")
        layers = []
        for l, ld in enumerate(layers_raw):
            ltag = f"{tag}.layers[{l}]"
            _require(isinstance(ld, dict), f"{ltag} must be an object")
            rows, cols = ld.get("rows"), ld.get("cols")
            _require(isinstance(rows, int) and rows >= 1 and
                     isinstance(cols, int) and cols >= 1,
                     f"{ltag} rows/cols must be positive integers")
            w = _finite_floats(ld.get("weights"), f"{ltag}.weights", rows * cols)
            bias_raw = ld.get("bias")
            bias = None if bias_raw is None else _finite_floats(
                bias_raw, f"{ltag}.bias", rows)
            act = ld.get("activation")
            _require(act in ("relu", "selu"), f"{ltag} unknown activation {act!r}")
            layers.append(nn.Layer(w.reshape(rows, cols), bias, act))
        try:
            mask = FeatureMask(np.asarray(mask_raw, dtype=np.int64), source_dim)
            subs.append(Submodel(nn.Mlp(layers), mask, float(q), sd["seed"]))
        except ValueError as exc:
            raise ModelFormatError(f"{tag}: {exc}") from exc
    try:
        return Ensemble(subs, power, weights, ScalerParams(mean, std))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc


def load(path) -> Ensemble:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot open {path}: {exc}") from exc
    return loads(text)
