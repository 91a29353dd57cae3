"""Dataset containers, CSV ingestion, encoding, scaling and splitting."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _as_binary(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector")
    if not np.all(np.isin(arr, (0, 1))):
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must be a nonempty n x p matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        Y = _as_binary(self.Y, "Y")
        if Y.shape[0] != X.shape[0]:
            raise ValueError("X and Y have different numbers of rows")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match number of columns")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.Y[rows], self.feature_names)


@dataclass(frozen=True)
class PUDataset:
    """Features with observed labelling indicator ``S``.

    ``Y_hidden`` is the true class, available only for simulated data.
    """

    X: np.ndarray
    S: np.ndarray
    Y_hidden: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must be a nonempty n x p matrix")
        S = _as_binary(self.S, "S")
        if S.shape[0] != X.shape[0]:
            raise ValueError("X and S have different numbers of rows")
        Y = None
        if self.Y_hidden is not None:
            Y = _as_binary(self.Y_hidden, "Y_hidden")
            if Y.shape != S.shape:
                raise ValueError("Y_hidden and S differ in length")
            if np.any(S > Y):
                raise ValueError("only positives can be labelled: found S=1 with Y=0")
            Y.setflags(write=False)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        X.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Y_hidden", Y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "PUDataset":
        Y = None if self.Y_hidden is None else self.Y_hidden[rows]
        return PUDataset(self.X[rows], self.S[rows], Y, self.feature_names)


@dataclass(frozen=True)
class ScalingParams:
    means: np.ndarray
    std_devs: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        sds = np.asarray(self.std_devs, dtype=float)
        if means.shape != sds.shape:
            raise ValueError("means and std_devs differ in length")
        if np.any(sds <= 0):
            raise ValueError("std_devs must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std_devs", sds)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.means.shape[0]:
            raise ValueError("column count does not match scaling parameters")
        return (X - self.means) / self.std_devs

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "std_devs": self.std_devs.tolist(),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(np.asarray(d["means"]), np.asarray(d["std_devs"]), tuple(d.get("feature_names", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ScalingParams":
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def one_hot_encode(table: pd.DataFrame) -> pd.DataFrame:
    """Expand every string column into sorted level indicators.

    Numeric columns pass through unchanged and in place; a string column with
    a single level carries no information and is dropped with a warning.
    """
    parts = []
    for col in table.columns:
        series = table[col]
        if pd.api.types.is_numeric_dtype(series) and not pd.api.types.is_bool_dtype(series):
            parts.append(series.astype(float).rename(str(col)))
            continue
        values = series.astype(str)
        levels = sorted(values.unique())
        if len(levels) == 1:
            logger.warning("dropping column %r: single constant level %r", col, levels[0])
            continue
        for level in levels:
            parts.append((values == level).astype(float).rename(f"{col}={level}"))
    if not parts:
        return pd.DataFrame(index=table.index)
    return pd.concat(parts, axis=1)


def dataset_from_frame(frame: pd.DataFrame, label_column) -> Dataset:
    if frame.shape[0] == 0:
        raise ValueError("empty dataset")
    if isinstance(label_column, int) and label_column not in frame.columns:
        label_column = frame.columns[label_column]
    if label_column not in frame.columns:
        raise KeyError(f"label column {label_column!r} not found")
    raw_y = pd.to_numeric(frame[label_column], errors="coerce")
    if raw_y.isna().any() or not raw_y.isin([0, 1]).all():
        raise ValueError(f"label column {label_column!r} must contain only 0 and 1")
    features = frame.drop(columns=[label_column])
    # numeric-looking text columns are numbers, not categories
    for col in features.columns:
        if features[col].dtype == object:
            converted = pd.to_numeric(features[col], errors="coerce")
            if not converted.isna().any():
                features[col] = converted
    if features.isna().any().any():
        bad = features.columns[features.isna().any()].tolist()
        raise ValueError(f"unparseable or missing cells in columns {bad}")
    encoded = one_hot_encode(features)
    if encoded.shape[1] == 0:
        raise ValueError("no usable feature columns")
    X = encoded.to_numpy(dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    ds = Dataset(X, raw_y.to_numpy().astype(np.int64), tuple(encoded.columns))
    logger.info("loaded %d rows, %d feature columns", ds.n, ds.p)
    return ds


def load_csv(path, label_column) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip", skipinitialspace=True)
    return dataset_from_frame(frame, label_column)


def write_csv(path, X, labels, feature_names=None, label_name: str = "y", extra: dict | None = None) -> None:
    """Write features plus a label column; floats round-trip exactly."""
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    frame = pd.DataFrame(X, columns=names)
    frame[label_name] = np.asarray(labels).astype(np.int64)
    for key, col in (extra or {}).items():
        frame[key] = col
    atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g"))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Scaling and splitting
# ---------------------------------------------------------------------------


def fit_scaling(X, fit_rows=None, feature_names=()) -> ScalingParams:
    X = np.asarray(X, dtype=float)
    rows = X if fit_rows is None else X[np.asarray(fit_rows)]
    if rows.shape[0] == 0:
        raise ValueError("fit_rows must be nonempty")
    means = rows.mean(axis=0)
    sds = rows.std(axis=0)  # population convention
    sds = np.where(sds > 0, sds, 1.0)
    return ScalingParams(means, sds, tuple(feature_names))


def standardize(dataset: Dataset, fit_rows=None) -> tuple[Dataset, ScalingParams]:
    """Z-score every column using statistics of ``fit_rows`` only."""
    scaling = fit_scaling(dataset.X, fit_rows, dataset.feature_names)
    return Dataset(scaling.apply(dataset.X), dataset.Y, dataset.feature_names), scaling


def split_indices(n: int, train_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(np.floor(n * train_fraction + 0.5))  # ties go to train
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split of {n} rows at fraction {train_fraction} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train_test_split(dataset, train_fraction: float = 0.7, seed=0):
    """Random row partition of a :class:`Dataset` or :class:`PUDataset`."""
    train, test = split_indices(dataset.n, train_fraction, seed)
    return dataset.subset(train), dataset.subset(test)
