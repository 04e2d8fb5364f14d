from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subsample_hpo.metrics import (
    OVR_WEIGHTED_AUC,
    R2,
    WEIGHTED_AUC,
    EvaluationScore,
    MetricError,
    ovr_weighted_auc,
    r2,
    score,
    weighted_auc,
)


def brute_auc(labels, scores) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def brute_ovr(labels, S) -> float:
    n, k = S.shape
    return sum((labels == c).sum() / n * brute_auc((labels == c).astype(int), S[:, c]) for c in range(k))


def test_auc_matches_pairwise_oracle_on_1000_points():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 1000)
    s = np.round(rng.normal(size=1000) + y, 1)  # rounding forces ties
    assert abs(weighted_auc(y, s).value - brute_auc(y, s)) < 1e-12


def test_ovr_matches_oracle_on_200x3():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 3, 200)
    S = rng.random((200, 3))
    S[np.arange(200), y] += 0.3
    assert abs(ovr_weighted_auc(y, S).value - brute_ovr(y, S)) < 1e-12


def test_auc_hand_cases():
    assert weighted_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]).value == 1.0
    assert weighted_auc([1, 1, 0, 0], [0.1, 0.2, 0.8, 0.9]).value == 0.0
    assert weighted_auc([0, 1], [0.5, 0.5]).value == 0.5
    # 3 positives x 2 negatives: pairs won 2 + 1.5 + 2 = 5.5 of 6
    assert weighted_auc([1, 0, 1, 0, 1], [3, 1, 2, 2, 4]).value == pytest.approx(5.5 / 6, abs=1e-15)


def test_r2_hand_case():
    assert r2([1, 2, 3], [1, 2, 4]).value == pytest.approx(0.5, abs=1e-15)


def test_r2_definition():
    rng = np.random.default_rng(2)
    y, p = rng.normal(size=500), rng.normal(size=500)
    expected = 1 - np.sum((y - p) ** 2) / np.sum((y - y.mean()) ** 2)
    assert abs(r2(y, p).value - expected) < 1e-12


@pytest.mark.parametrize("call", [
    lambda: weighted_auc([1, 1, 1], [0.1, 0.2, 0.3]),
    lambda: weighted_auc([0, 2, 1], [0.1, 0.2, 0.3]),
    lambda: weighted_auc([0, 1], [0.1]),
    lambda: ovr_weighted_auc([0, 1, 1], np.ones((3, 3))),
    lambda: ovr_weighted_auc([0, 1], np.ones((2, 2))),
    lambda: r2([1, 1, 1], [1, 2, 3]),
    lambda: score("accuracy", [0, 1], [0, 1]),
])
def test_undefined_inputs_raise(call):
    with pytest.raises(MetricError):
        call()


def test_score_dispatch_and_roundtrip():
    s = score(R2, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert s == EvaluationScore(1.0, R2, 3)
    assert EvaluationScore.from_dict(s.to_dict()) == s
    assert score(WEIGHTED_AUC, [0, 1], [0, 1]).metric_kind == WEIGHTED_AUC
    assert score(OVR_WEIGHTED_AUC, [0, 1, 2], np.eye(3)).value == 1.0


labels_and_scores = st.integers(2, 60).flatmap(lambda n: st.tuples(
    arrays(np.int64, n, elements=st.integers(0, 1)),
    arrays(np.float64, n, elements=st.integers(-50, 50).map(float)),  # small range: plenty of ties
)).filter(lambda t: 0 < t[0].sum() < len(t[0]))


@settings(max_examples=200, deadline=None)
@given(labels_and_scores)
def test_auc_properties(data):
    y, s = data
    v = weighted_auc(y, s).value
    assert 0.0 <= v <= 1.0
    assert abs(v - brute_auc(y, s)) < 1e-12
    # invariant under strictly increasing transforms
    assert weighted_auc(y, 3 * np.exp(s / 7) + 1).value == pytest.approx(v, abs=1e-12)
    assert weighted_auc(y, s).value + weighted_auc(1 - y, s).value == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-100, 100)),
       st.floats(0.1, 10.0), st.floats(-50, 50), st.integers(0, 2**32))
def test_r2_properties(y, a, b, seed):
    if np.ptp(y) < 1e-6:
        return
    p = y + np.random.default_rng(seed).normal(size=y.size)
    v = r2(y, p).value
    assert v <= 1.0
    assert r2(a * y + b, a * p + b).value == pytest.approx(v, rel=1e-9, abs=1e-9)
