"""Tabular data ingestion, the train/valid/test split and fractional views.

Splits and views are index arrays into the dataset; row payloads are only
copied when a trainer asks for a contiguous buffer (:meth:`DataView.materialize`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BINARY = "binary"
MULTICLASS = "multiclass"
REGRESSION = "regression"
TASKS = (BINARY, MULTICLASS, REGRESSION)

STRESS_FRACTIONS = (1e-3, 1e-4, 1e-5)


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str
    feature_names: tuple[str, ...]
    n_classes: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError("X must be (N, D) and y must be (N,)")
        if X.shape[0] < 10:
            raise DataError(f"dataset needs at least 10 rows, got {X.shape[0]}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match column count")
        if not np.isfinite(X).all() or not np.isfinite(y).all():
            raise DataError("dataset contains non-finite values")
        k = self.n_classes
        if self.task != REGRESSION:
            if np.any(y != np.round(y)):
                raise DataError("classification target not integral")
            if self.task == BINARY:
                k = 2
            elif k == 0:
                k = int(y.max()) + 1
            if k < 2 or (self.task == MULTICLASS and k < 3):
                raise DataError(f"invalid class count {k} for task {self.task}")
            if y.min() < 0 or y.max() >= k:
                raise DataError(f"target out of range [0, {k})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n_classes", k)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    valid_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.valid_frac, self.test_frac)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise DataError("split fractions must be positive and sum to 1")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int


@dataclass(frozen=True, eq=False)
class DataView:
    """Rows ``source[row_index]`` of one split, the fidelity-``fraction`` view."""

    source: np.ndarray
    fraction: float
    seed: int
    row_index: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.row_index)

    @property
    def rows(self) -> np.ndarray:
        """Dataset row ids in this view."""
        return self.source[self.row_index]

    def materialize(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        key = id(dataset)
        if key not in self._cache:
            rows = self.rows
            self._cache[key] = (np.ascontiguousarray(dataset.X[rows]), dataset.y[rows].copy())
        return self._cache[key]


@dataclass(frozen=True)
class FidelityLadder:
    fractions: tuple[float, ...]

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if not fr:
            raise DataError("ladder is empty")
        if any(not 0 < f <= 1 for f in fr):
            raise DataError("ladder fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise DataError("ladder fractions must be strictly increasing")
        if fr[-1] != 1.0:
            raise DataError("ladder must end at 1.0")

    @classmethod
    def default(cls) -> "FidelityLadder":
        return cls((1 / 100, 1 / 10, 1 / 4, 1 / 2, 3 / 4, 1.0))

    @property
    def r_min(self) -> float:
        return self.fractions[0]

    @property
    def r_max(self) -> float:
        return self.fractions[-1]

    def __iter__(self):
        return iter(self.fractions)

    def __len__(self) -> int:
        return len(self.fractions)

    def __contains__(self, r) -> bool:
        return any(math.isclose(r, f, rel_tol=1e-12) for f in self.fractions)

    def ceil(self, r: float) -> float:
        """Smallest ladder fraction >= r (tolerating float noise)."""
        for f in self.fractions:
            if f >= r * (1 - 1e-12):
                return f
        return self.fractions[-1]


def load_table(path, task: str, target_column: str, n_classes: int = 0) -> Dataset:
    """Read a numeric CSV with a header row into a :class:`Dataset`."""
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: unknown target column {target_column!r}")
        t = header.index(target_column)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for col, cell in zip(header, rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    feats = [i for i in range(len(header)) if i != t]
    return Dataset(X=data[:, feats], y=data[:, t], task=task,
                   feature_names=tuple(header[i] for i in feats), n_classes=n_classes)


def write_table(path, X: np.ndarray, y: np.ndarray, feature_names: Sequence[str],
                target_column: str = "target") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*feature_names, target_column])
        for row, t in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def split(dataset: Dataset | int, spec: SplitSpec) -> Split:
    """Seeded uniform partition of row indices.

    Valid and test sizes are ``round(frac * N)``; train takes the remainder.
    Depends only on ``N`` and the seed.
    """
    n = dataset if isinstance(dataset, int) else dataset.n_rows
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_valid = int(math.floor(spec.valid_frac * n + 0.5))
    n_test = int(math.floor(spec.test_frac * n + 0.5))
    n_train = n - n_valid - n_test
    return Split(train=perm[:n_train], valid=perm[n_train:n_train + n_valid],
                 test=perm[n_train + n_valid:], seed=spec.seed)


def view_size(n: int, r: float) -> int:
    return max(1, int(math.floor(r * n + 0.5)))


def subsample(train: np.ndarray, r: float, seed: int) -> DataView:
    """Prefix of one seeded permutation of ``train``; views nest across ``r``."""
    if not 0 < r <= 1:
        raise DataError(f"fraction must lie in (0, 1], got {r}")
    train = np.asarray(train)
    perm = np.random.default_rng(seed).permutation(len(train))
    return DataView(source=train, fraction=float(r), seed=seed,
                    row_index=perm[:view_size(len(train), r)])
