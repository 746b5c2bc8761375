"""Dataset ingestion, standardization, splitting and synthetic generators.

Datasets are row-major float64 matrices with optional binary anomaly
labels (0 normal, 1 anomaly) and an optional binary group attribute
(0 protected, 1 unprotected).  All values must be finite.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataFormatError
from .rng import mix64

STD_FLOOR = 1e-12

SYNTHETIC_KINDS = ("linear-pattern", "gauss-blob", "sine-demo", "biased-groups")


@dataclass
class Dataset:
    values: np.ndarray
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dataset contains non-finite values")
        if self.feature_names is not None:
            if len(self.feature_names) != self.values.shape[1]:
                raise ValueError("one feature name per column required")
            if len(set(self.feature_names)) != len(self.feature_names):
                raise ValueError("feature names must be distinct")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _check_binary(vec, what, rows):
    v = np.asarray(vec)
    if v.shape != (rows,):
        raise ValueError(f"{what} length must equal the row count")
    if not np.all(np.isin(v, (0, 1))):
        raise ValueError(f"{what} must contain only 0 and 1")
    return np.ascontiguousarray(v.astype(np.int64))


@dataclass
class LabeledDataset:
    data: Dataset
    labels: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = _check_binary(self.labels, "labels", self.data.rows)
        if self.groups is not None:
            self.groups = _check_binary(self.groups, "groups", self.data.rows)

    @property
    def rows(self) -> int:
        return self.data.rows


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D and of equal length")
        if np.any(self.std < STD_FLOOR):
            raise ValueError(f"std entries must be >= {STD_FLOOR}")


def load_csv(path, label_col=None, group_col=None) -> LabeledDataset:
    """Read a comma-separated file with a mandatory header row.

    label_col / group_col name columns extracted as binary labels and group
    attributes; all remaining columns must parse as decimal reals and keep
    their file order.  Errors carry the offending 1-based data row and
    column name.
    """
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        special = {}
        for role, name in (("label", label_col), ("group", group_col)):
            if name is None:
                continue
            if name not in header:
                raise DataFormatError(f"{path}: no column named {name!r}")
            special[header.index(name)] = role
        feature_idx = [j for j in range(len(header)) if j not in special]
        feature_names = [header[j] for j in feature_idx]
        values, labels, groups = [], [], []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
            parsed = []
            for j, cell in enumerate(row):
                try:
                    x = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {i}, column {header[j]!r}: "
                        f"cannot parse {cell.strip()!r} as a real number") from None
                if not math.isfinite(x):
                    raise DataFormatError(
                        f"{path}: row {i}, column {header[j]!r}: non-finite value")
                if j in special:
                    if x not in (0.0, 1.0):
                        raise DataFormatError(
                            f"{path}: row {i}, column {header[j]!r}: "
                            f"{special[j]} value must be 0 or 1, got {cell.strip()!r}")
                    (labels if special[j] == "label" else groups).append(int(x))
                else:
                    parsed.append(x)
            values.append(parsed)
        if not values:
            raise DataFormatError(f"{path}: no data rows")
    data = Dataset(np.array(values, dtype=np.float64), feature_names)
    return LabeledDataset(
        data,
        np.array(labels, dtype=np.int64) if label_col is not None else None,
        np.array(groups, dtype=np.int64) if group_col is not None else None,
    )


def write_csv(path, dataset: LabeledDataset, label_col="label", group_col="group"):
    """Inverse of load_csv; reals printed with 17 significant digits."""
    names = dataset.data.feature_names or [
        f"f{j}" for j in range(dataset.data.cols)]
    header = list(names)
    if dataset.labels is not None:
        header.append(label_col)
    if dataset.groups is not None:
        header.append(group_col)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(dataset.rows):
            cells = [format(x, ".17g") for x in dataset.data.values[i]]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            if dataset.groups is not None:
                cells.append(str(int(dataset.groups[i])))
            fh.write(",".join(cells) + "\n")


def fit_standardizer(train: Dataset) -> ScalerParams:
    """Column means and population stds, stds floored at 1e-12."""
    if train.rows < 1:
        raise ValueError("cannot fit a standardizer on an empty dataset")
    mean = train.values.mean(axis=0)
    std = np.maximum(train.values.std(axis=0), STD_FLOOR)
    return ScalerParams(mean, std)


def apply_standardizer(params: ScalerParams, data) -> np.ndarray:
    """(x - mean) / std per column; accepts a Dataset or a raw matrix."""
    values = data.values if isinstance(data, Dataset) else np.asarray(
        data, dtype=np.float64)
    if values.shape[-1] != params.mean.shape[0]:
        raise ValueError(
            f"data has {values.shape[-1]} columns, scaler expects "
            f"{params.mean.shape[0]}")
    return np.ascontiguousarray((values - params.mean) / params.std)


def make_synthetic(kind, n_normal, n_anomaly, dim, seed) -> LabeledDataset:
    """Deterministic synthetic datasets for tests and benchmarks.

    linear-pattern: normals satisfy x1 = x0 + N(0, 0.01^2) with all other
      coordinates standard normal; anomalies draw x0 and x1 independently.
    gauss-blob: normals N(0, I), anomalies uniform on [-6, 6]^dim.
    sine-demo: an even grid x on [-pi, pi] paired with sin(x); no labels.
    biased-groups: gauss-blob plus alternating binary groups, with group-0
      anomalies placed at distance 2 from the cluster center instead of
      uniform, so the groups separate with different ease.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n_normal < 1:
        raise ValueError("n_normal must be >= 1")
    rng = np.random.default_rng(mix64(seed, 0))

    if kind == "sine-demo":
        x = np.linspace(-np.pi, np.pi, n_normal)
        values = np.column_stack([x, np.sin(x)])
        return LabeledDataset(Dataset(values, ["x", "sin_x"]))

    if dim < 2 and kind == "linear-pattern":
        raise ValueError("linear-pattern needs dim >= 2")
    if dim < 1:
        raise ValueError("dim must be >= 1")

    n = n_normal + n_anomaly
    labels = np.zeros(n, dtype=np.int64)
    labels[n_normal:] = 1

    if kind == "linear-pattern":
        values = rng.standard_normal((n, dim))
        values[:n_normal, 1] = (values[:n_normal, 0]
                                + 0.01 * rng.standard_normal(n_normal))
        return LabeledDataset(Dataset(values), labels)

    values = rng.standard_normal((n, dim))
    if kind == "gauss-blob":
        values[n_normal:] = rng.uniform(-6.0, 6.0, size=(n_anomaly, dim))
        return LabeledDataset(Dataset(values), labels)

    # biased-groups
    groups = np.arange(n, dtype=np.int64) % 2
    uniform = rng.uniform(-6.0, 6.0, size=(n_anomaly, dim))
    near = rng.standard_normal((n_anomaly, dim)) + 2.0 / np.sqrt(dim)
    anom_groups = groups[n_normal:]
    values[n_normal:] = np.where(anom_groups[:, None] == 1, uniform, near)
    return LabeledDataset(Dataset(values), labels, groups)


def split(data: LabeledDataset, train_fraction, seed, normal_only_train=False):
    """Deterministic shuffled split into (train, test).

    With normal_only_train, every anomaly goes to the test side and the
    train side keeps only label-0 rows (up to the requested fraction).
    """
    if data.rows < 2:
        raise ValueError("need at least two rows to split")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must be in (0, 1]")
    perm = np.random.default_rng(mix64(seed, 0)).permutation(data.rows)
    n_train = int(round(train_fraction * data.rows))
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    if normal_only_train and data.labels is not None:
        moved = train_idx[data.labels[train_idx] == 1]
        train_idx = train_idx[data.labels[train_idx] == 0]
        test_idx = np.concatenate([moved, test_idx])
    if train_idx.size == 0:
        raise ValueError("train split is empty")

    def take(idx):
        return LabeledDataset(
            Dataset(data.data.values[idx], data.data.feature_names),
            data.labels[idx] if data.labels is not None else None,
            data.groups[idx] if data.groups is not None else None,
        )

    return take(train_idx), take(test_idx)
