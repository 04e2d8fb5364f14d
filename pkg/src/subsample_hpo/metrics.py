"""Maximize-is-better evaluation scores: weighted AUC, one-vs-rest weighted AUC, R^2."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

WEIGHTED_AUC = "weighted-auc"
OVR_WEIGHTED_AUC = "ovr-weighted-auc"
R2 = "r2"
METRICS = (WEIGHTED_AUC, OVR_WEIGHTED_AUC, R2)

TASK_METRIC = {"binary": WEIGHTED_AUC, "multiclass": OVR_WEIGHTED_AUC, "regression": R2}


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationScore:
    value: float
    metric_kind: str
    n_evaluated: int

    def to_dict(self) -> dict:
        return {"value": self.value, "metric_kind": self.metric_kind, "n_evaluated": self.n_evaluated}

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationScore":
        return cls(float(d["value"]), d["metric_kind"], int(d["n_evaluated"]))


def _binary_auc(positive: np.ndarray, scores: np.ndarray) -> float:
    # Mann-Whitney with midranks: ties between a positive and a negative count 1/2
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: only one class present")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def weighted_auc(labels, scores) -> EvaluationScore:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise MetricError("labels and scores must be equal-length vectors")
    if labels.size < 2:
        raise MetricError("need at least two examples")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("binary labels must be 0 or 1")
    return EvaluationScore(_binary_auc(labels == 1, scores), WEIGHTED_AUC, int(labels.size))


def ovr_weighted_auc(labels, score_matrix) -> EvaluationScore:
    """Support-weighted mean of per-class one-vs-rest AUCs."""
    labels = np.asarray(labels)
    S = np.asarray(score_matrix, dtype=np.float64)
    if S.ndim != 2 or labels.shape != (S.shape[0],):
        raise MetricError("score_matrix must be n x k with n = len(labels)")
    k = S.shape[1]
    if k < 3:
        raise MetricError("one-vs-rest AUC needs k >= 3 classes")
    if not np.isfinite(S).all():
        raise MetricError("score_matrix has non-finite entries")
    n = labels.size
    total = 0.0
    for c in range(k):
        pos = labels == c
        support = int(pos.sum())
        if support == 0:
            raise MetricError(f"class {c} has zero support")
        total += support / n * _binary_auc(pos, S[:, c])
    return EvaluationScore(float(total), OVR_WEIGHTED_AUC, int(n))


def r2(y_true, y_pred) -> EvaluationScore:
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1 or y.size < 2:
        raise MetricError("r2 needs equal-length vectors of length >= 2")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("r2 undefined for constant y_true")
    return EvaluationScore(1.0 - float(np.sum((y - p) ** 2)) / ss_tot, R2, int(y.size))


def score(metric_kind: str, labels, predictions) -> EvaluationScore:
    if metric_kind == WEIGHTED_AUC:
        return weighted_auc(labels, predictions)
    if metric_kind == OVR_WEIGHTED_AUC:
        return ovr_weighted_auc(labels, predictions)
    if metric_kind == R2:
        return r2(labels, predictions)
    raise MetricError(f"unknown metric {metric_kind!r}")
