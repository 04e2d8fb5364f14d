"""Reference gradient-boosted tree learner driven by the eight tuned hyperparameters.

Second-order boosting with exact greedy splits: each round fits one tree
(one per class for multiclass) to gradient/hessian statistics of the
current margins, then adds its ``eta``-shrunk leaf weights.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .. import metrics
from ..dataio import BINARY, MULTICLASS, REGRESSION, Dataset, DataView
from ..search_space import default_xgboost_space, validate_config
from ._kernels import add_tree_output, grow_tree

_HESS_FLOOR = 1e-16


class LearnerError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray  # go left iff x < threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # leaf weights (already shrunk by eta)
    gain: np.ndarray

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(int(self.left[node])), self.depth(int(self.right[node])))

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feat, thr, left, right, value, gain = [], [], [], [], [], []

        def visit(node):
            k = len(feat)
            for arr in (feat, left, right):
                arr.append(-1)
            thr.append(0.0)
            value.append(0.0)
            gain.append(0.0)
            if "leaf" in node:
                value[k] = float(node["leaf"])
            else:
                feat[k] = int(node["feature"])
                thr[k] = float(node["threshold"])
                gain[k] = float(node["gain"])
                left[k] = visit(node["left"])
                right[k] = visit(node["right"])
            return k

        visit(d)
        return cls(np.array(feat, np.int64), np.array(thr), np.array(left, np.int64),
                   np.array(right, np.int64), np.array(value), np.array(gain))

    def internal_gains(self) -> np.ndarray:
        return self.gain[self.feature >= 0]


@dataclass(eq=False)
class BoostedModel:
    trees: list
    base_score: np.ndarray  # length 1, or k for multiclass
    task: str
    n_classes: int
    n_features: int
    config: dict = field(default_factory=dict)

    @property
    def trees_per_round(self) -> int:
        return self.n_classes if self.task == MULTICLASS else 1

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "base_score": [float(b) for b in self.base_score],
            "config": {k: float(v) for k, v in self.config.items()},
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        return cls(trees=[Tree.from_dict(t) for t in d["trees"]],
                   base_score=np.array(d["base_score"], dtype=np.float64), task=d["task"],
                   n_classes=int(d["n_classes"]), n_features=int(d["n_features"]),
                   config=dict(d.get("config", {})))


def _base_score(task: str, y: np.ndarray, k: int) -> np.ndarray:
    if task == REGRESSION:
        return np.array([y.mean()])
    # half-count smoothing keeps log-odds finite when a class is absent from a tiny view
    counts = np.bincount(y.astype(np.int64), minlength=k)[:k].astype(np.float64)
    prior = (counts + 0.5) / (len(y) + 0.5 * k)
    if task == BINARY:
        return np.array([np.log(prior[1] / prior[0])])
    return np.log(prior)


def _grad_hess(task: str, margin: np.ndarray, y: np.ndarray, k: int):
    if task == REGRESSION:
        return margin[:, 0] - y, np.ones_like(y)
    if task == BINARY:
        p = expit(margin[:, 0])
        return p - y, np.maximum(p * (1.0 - p), _HESS_FLOOR)
    p = softmax(margin, axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(y)), y.astype(np.int64)] = 1.0
    return p - onehot, np.maximum(p * (1.0 - p), _HESS_FLOOR)


def training_loss(task: str, margin: np.ndarray, y: np.ndarray) -> float:
    """Mean loss of raw margins (n, 1) or (n, k) against targets."""
    margin = np.asarray(margin, dtype=np.float64)
    if margin.ndim == 1:
        margin = margin[:, None]
    if task == REGRESSION:
        return float(np.mean((margin[:, 0] - y) ** 2) / 2)
    if task == BINARY:
        m = margin[:, 0]
        return float(np.mean(np.logaddexp(0.0, m) - y * m))
    ls = log_softmax(margin, axis=1)
    return float(-np.mean(ls[np.arange(len(y)), y.astype(np.int64)]))


def _check_config(config: dict) -> None:
    bad = validate_config(default_xgboost_space(), config)
    if bad:
        raise LearnerError(f"invalid configuration: {', '.join(bad)}")


def fit(config: dict, X: np.ndarray, y: np.ndarray, task: str, seed: int,
        n_classes: int = 0, margin_trace: list | None = None) -> BoostedModel:
    """Fit on contiguous arrays. ``margin_trace`` collects the margins after each round."""
    _check_config(config)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise LearnerError("empty training view")
    k = {REGRESSION: 1, BINARY: 2}.get(task, n_classes)
    if task == MULTICLASS and k < 3:
        raise LearnerError("multiclass training needs n_classes >= 3")
    eta = float(config["eta"])
    alpha = float(config["alpha"])
    lam = float(config["lambda"])
    gamma = float(config["gamma"])
    max_depth = int(config["max_depth"])
    num_round = int(config["num_round"])
    n_rows = max(1, int(np.floor(config["subsample"] * n + 0.5)))
    n_cols = max(1, int(np.floor(config["col_subsample"] * d + 0.5)))

    base = _base_score(task, y, k)
    n_out = k if task == MULTICLASS else 1
    margin = np.tile(base, (n, 1)) if task == MULTICLASS else np.full((n, 1), base[0])
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    sorted_vals = np.take_along_axis(X, order.T, axis=0).T.copy()
    max_nodes = 2 ** (max_depth + 1) - 1
    gs, hs = np.empty((n_cols, n)), np.empty((n_cols, n))
    trees = []
    for rnd in range(num_round):
        rng = np.random.default_rng([seed, rnd])
        in_sample = np.zeros(n, dtype=np.bool_)
        in_sample[rng.choice(n, size=n_rows, replace=False) if n_rows < n else slice(None)] = True
        features = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)
        grad, hess = _grad_hess(task, margin, y, k)
        if grad.ndim == 1:
            grad, hess = grad[:, None], hess[:, None]
        for c in range(n_out):
            arrs = (np.empty(max_nodes, np.int64), np.empty(max_nodes), np.empty(max_nodes, np.int64),
                    np.empty(max_nodes, np.int64), np.empty(max_nodes), np.empty(max_nodes))
            used = grow_tree(X, order, sorted_vals, np.ascontiguousarray(grad[:, c]), np.ascontiguousarray(hess[:, c]),
                             in_sample, features, max_depth, lam, alpha, gamma, eta, *arrs, gs, hs)
            tree = Tree(*(a[:used].copy() for a in arrs))
            trees.append(tree)
            col = np.ascontiguousarray(margin[:, c])
            add_tree_output(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, col)
            margin[:, c] = col
        if not np.isfinite(margin).all():
            raise LearnerError(f"non-finite margins after round {rnd}")
        if margin_trace is not None:
            margin_trace.append(margin.copy())
    return BoostedModel(trees=trees, base_score=base, task=task, n_classes=k if task != REGRESSION else 0,
                        n_features=d, config=dict(config))


def train(config: dict, view: DataView, dataset: Dataset, seed: int) -> tuple[BoostedModel, float]:
    """Train on a fractional view of ``dataset``; returns the model and wallclock seconds."""
    t0 = time.perf_counter()
    if len(view) == 0:
        raise LearnerError("empty training view")
    X, y = view.materialize(dataset)
    model = fit(config, X, y, dataset.task, seed, n_classes=dataset.n_classes)
    return model, time.perf_counter() - t0


def predict_margin(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise LearnerError(f"expected {model.n_features} features, got shape {X.shape}")
    per_round = model.trees_per_round
    out = np.empty((X.shape[0], per_round))
    for c in range(per_round):
        col = np.full(X.shape[0], model.base_score[c])
        for tree in model.trees[c::per_round]:
            add_tree_output(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, col)
        out[:, c] = col
    return out


_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def predict(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    """Regression values, binary probabilities in (0, 1), or multiclass softmax rows."""
    m = predict_margin(model, X)
    if model.task == REGRESSION:
        return m[:, 0]
    if model.task == BINARY:
        return np.clip(expit(m[:, 0]), _P_LO, _P_HI)
    return softmax(m, axis=1)


_COMPATIBLE = {REGRESSION: metrics.R2, BINARY: metrics.WEIGHTED_AUC, MULTICLASS: metrics.OVR_WEIGHTED_AUC}


def evaluate(model: BoostedModel, X: np.ndarray, labels, metric_kind: str) -> metrics.EvaluationScore:
    if _COMPATIBLE[model.task] != metric_kind:
        raise metrics.MetricError(f"metric {metric_kind!r} is incompatible with task {model.task!r}")
    if model.task == BINARY:
        # rank metrics on margins: same ordering as probabilities, without saturation ties
        return metrics.score(metric_kind, labels, predict_margin(model, X)[:, 0])
    return metrics.score(metric_kind, labels, predict(model, X))
