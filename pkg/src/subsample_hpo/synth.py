"""Seeded synthetic tabular datasets for desk-scale experiments."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataio import BINARY, MULTICLASS, REGRESSION, TASKS, Dataset, write_table


@dataclass(frozen=True)
class SynthSpec:
    task: str = REGRESSION
    n_rows: int = 1000
    n_features: int = 10
    noise: float = 0.1
    seed: int = 0
    n_classes: int = 3
    fidelity_sensitive: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.n_rows < 10:
            raise ValueError("n_rows must be >= 10")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if not self.noise >= 0:
            raise ValueError("noise must be >= 0")
        if self.task == MULTICLASS and self.n_classes < 3:
            raise ValueError("multiclass needs n_classes >= 3")

    def to_dict(self) -> dict:
        return asdict(self)


def _signal(X: np.ndarray, rng: np.random.Generator, sensitive: bool) -> np.ndarray:
    d = X.shape[1]
    k = min(d, 5)
    feats = rng.choice(d, size=k, replace=False)
    coef = rng.uniform(0.5, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
    f = X[:, feats] @ coef
    for _ in range(min(3, k * (k - 1) // 2)):
        a, b = rng.choice(feats, size=2, replace=False) if k > 1 else (feats[0], feats[0])
        f += rng.uniform(0.5, 1.5) * X[:, a] * X[:, b]
    if sensitive:
        # many small axis-aligned steps and a fast oscillation: cheap views underfit these
        for _ in range(2 * d):
            j = rng.integers(d)
            f += rng.uniform(0.3, 0.8) * (X[:, j] > rng.normal(0, 0.8))
        j = rng.integers(d)
        f += 1.5 * np.sin(3.0 * X[:, j])
    sd = f.std()
    return (f - f.mean()) / (sd if sd > 0 else 1.0)


def make_synthetic(spec: SynthSpec) -> Dataset:
    """Sparse linear plus pairwise-interaction target.

    Regression adds Gaussian noise to the standardized signal; classification
    samples labels from a logistic (binary) or softmax (multiclass) link.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.normal(size=(spec.n_rows, spec.n_features))
    names = tuple(f"x{i}" for i in range(spec.n_features))
    if spec.task == REGRESSION:
        y = _signal(X, rng, spec.fidelity_sensitive) + spec.noise * rng.normal(size=spec.n_rows)
        return Dataset(X, y, REGRESSION, names)
    if spec.task == BINARY:
        logit = 3.0 * _signal(X, rng, spec.fidelity_sensitive) + spec.noise * rng.normal(size=spec.n_rows)
        y = (rng.random(spec.n_rows) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)
        return Dataset(X, y, BINARY, names)
    k = spec.n_classes
    logits = np.column_stack([2.0 * _signal(X, rng, spec.fidelity_sensitive) for _ in range(k)])
    logits += spec.noise * rng.normal(size=logits.shape)
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(spec.n_rows)[:, None]
    y = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), k - 1).astype(np.float64)
    return Dataset(X, y, MULTICLASS, names, n_classes=k)


def write_synthetic(spec: SynthSpec, path) -> Dataset:
    ds = make_synthetic(spec)
    write_table(path, ds.X, ds.y, ds.feature_names)
    return ds


def benchmark_spec(seed: int = 0, n_rows: int = 12_500, task: str = REGRESSION) -> SynthSpec:
    """The fidelity-sensitive benchmark used by the desk-scale experiments."""
    return SynthSpec(task=task, n_rows=n_rows, n_features=10, noise=0.3, seed=seed, fidelity_sensitive=True)
