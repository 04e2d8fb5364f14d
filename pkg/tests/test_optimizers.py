from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from subsample_hpo.analysis import QuadraticBenchmark
from subsample_hpo.dataio import FidelityLadder
from subsample_hpo.executor import COMPLETED, FAILED, TrialRecord, TrialSeeds
from subsample_hpo.metrics import EvaluationScore
from subsample_hpo.optimizers import (
    BracketPlan,
    BudgetSpec,
    Candidate,
    GaussianProcess,
    Rung,
    SurrogateState,
    derive_seed,
    expected_improvement,
    fit_surrogate,
    gp_ei_propose,
    hyperband_schedule,
    promote,
    run_hyperband,
    run_model_based_hyperband,
    run_random_search,
    successive_halving,
)
from subsample_hpo.optimizers.hyperband import max_bracket_index
from subsample_hpo.search_space import default_xgboost_space, sample_config

SPACE = default_xgboost_space()
LADDER = FidelityLadder.default()

# Hand-evaluated schedule for the default ladder and eta = 3.
# s=4: geometric 1/81, 1/27, 1/9, 1/3, 1 round up to 0.1, 0.1, 0.25, 0.5, 1 (one duplicate)
# s=3: n0 = ceil(5/4 * 27) = 34;  s=2: ceil(5/3 * 9) = 15;  s=1: ceil(5/2 * 3) = 8;  s=0: 5
HAND_SCHEDULE = {
    4: [(81, 0.1), (27, 0.25), (9, 0.5), (3, 1.0)],
    3: [(34, 0.1), (11, 0.25), (3, 0.5), (1, 1.0)],
    2: [(15, 0.25), (5, 0.5), (1, 1.0)],
    1: [(8, 0.5), (2, 1.0)],
    0: [(5, 1.0)],
}


class FailingBenchmark(QuadraticBenchmark):
    """Fails every trial whose config satisfies ``bad``."""

    def __init__(self, bad, **kw):
        super().__init__(SPACE, **kw)
        self.bad = bad

    def run_batch(self, requests):
        out = super().run_batch(requests)
        for rec in out:
            if self.bad(rec.config, rec.fraction):
                rec.status, rec.score, rec.reason = FAILED, None, "injected"
        return out


def test_schedule_matches_hand_table():
    plans = hyperband_schedule(LADDER, 3)
    assert max_bracket_index(LADDER, 3) == 4
    assert [p.s for p in plans] == [4, 3, 2, 1, 0]
    assert plans[0].n0 == 81
    for p in plans:
        assert [(r.n, r.fraction) for r in p.rungs] == HAND_SCHEDULE[p.s]


@pytest.mark.parametrize("fractions, eta", [
    ((0.01, 0.1, 0.25, 0.5, 0.75, 1.0), 3),
    ((0.01, 0.1, 0.25, 0.5, 0.75, 1.0), 2),
    ((0.01, 0.1, 0.25, 0.5, 0.75, 1.0), 4),
    ((1 / 81, 1 / 27, 1 / 9, 1 / 3, 1.0), 3),
    ((0.001, 0.01, 0.1, 1.0), 10),
    ((0.5, 1.0), 2),
])
def test_schedule_invariants(fractions, eta):
    ladder = FidelityLadder(fractions)
    plans = hyperband_schedule(ladder, eta)
    s_max = max_bracket_index(ladder, eta)
    assert len(plans) == s_max + 1
    assert s_max == math.floor(math.log(ladder.r_max / ladder.r_min) / math.log(eta) + 1e-9)
    for p in plans:
        ns = [r.n for r in p.rungs]
        rs = [r.fraction for r in p.rungs]
        assert p.n0 == math.ceil((s_max + 1) / (p.s + 1) * eta ** p.s - 1e-9)
        assert all(b == a // eta for a, b in zip(ns, ns[1:]))
        assert all(a > b for a, b in zip(ns, ns[1:]))
        assert all(a < b for a, b in zip(rs, rs[1:]))
        assert rs[-1] == ladder.r_max
        assert all(r in ladder for r in rs)
        # resource bound on the geometric schedule before ladder rounding
        geo = sum((p.n0 // eta ** i) * ladder.r_max * eta ** (i - p.s) for i in range(p.s + 1))
        assert geo <= (p.s + 1) * p.n0 * ladder.r_max * eta ** -p.s + 1e-12


def test_schedule_on_exact_geometric_ladder():
    plans = hyperband_schedule(FidelityLadder((1 / 81, 1 / 27, 1 / 9, 1 / 3, 1.0)), 3)
    assert [(r.n, r.fraction) for r in plans[0].rungs] == [
        (81, 1 / 81), (27, 1 / 27), (9, 1 / 9), (3, 1 / 3), (1, 1.0)]


def test_schedule_errors():
    with pytest.raises(ValueError):
        hyperband_schedule(FidelityLadder((1.0,)), 3)
    with pytest.raises(ValueError):
        hyperband_schedule(LADDER, 1)


def _cands(n, seed=0):
    return [Candidate(sample_config(SPACE, seed * 1000 + j), j, j) for j in range(n)]


def test_successive_halving_13_trials():
    bench = QuadraticBenchmark(SPACE, seed=1, noise=0.0)
    rungs = (Rung(9, 0.1), Rung(3, 0.5), Rung(1, 1.0))
    cands = _cands(9)
    recs, survivor, stopped = successive_halving(cands, rungs, bench, eta=3)
    assert len(recs) == 13 and not stopped
    assert [r.fraction for r in recs] == [0.1] * 9 + [0.5] * 3 + [1.0]
    best = max(cands, key=lambda c: bench.objective(c.config))
    assert survivor.config == best.config


def test_single_config_single_rung():
    bench = QuadraticBenchmark(SPACE, noise=0.0)
    c = _cands(1)
    recs, survivor, _ = successive_halving(c, (Rung(1, 1.0),), bench)
    assert len(recs) == 1 and survivor is c[0]


def _rec(i, value):
    status = COMPLETED if value is not None else FAILED
    score = EvaluationScore(value, "r2", 1) if value is not None else None
    return TrialRecord(i, {}, 0.1, TrialSeeds(0, 0, 0), status, score)


def test_tie_goes_to_earlier_sampled():
    cands = [Candidate({"i": j}, 0, j) for j in range(4)]
    recs = [_rec(0, 0.5), _rec(1, 0.9), _rec(2, 0.7), _rec(3, 0.9)]
    assert [c.index for c in promote(recs, cands, 1)] == [1]
    assert [c.index for c in promote(recs, cands, 3)] == [1, 3, 2]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(-1, 1)), min_size=1, max_size=30), st.data())
def test_promotion_monotonicity(values, data):
    k = data.draw(st.integers(0, len(values)))
    cands = [Candidate({}, 0, j) for j in range(len(values))]
    recs = [_rec(j, v) for j, v in enumerate(values)]
    promoted = {c.index for c in promote(recs, cands, k)}
    assert len(promoted) == k
    rest = [recs[j].value for j in range(len(values)) if j not in promoted]
    if promoted and rest:
        assert min(recs[j].value for j in promoted) >= max(rest)


def test_failed_configs_are_demoted_not_fatal():
    bench = FailingBenchmark(lambda cfg, r: cfg["eta"] > 0.03, noise=0.0)
    cands = _cands(9, seed=3)
    recs, survivor, _ = successive_halving(cands, (Rung(9, 0.1), Rung(3, 0.5), Rung(1, 1.0)), bench)
    assert len(recs) == 13
    first = recs[:9]
    promoted = {tuple(r.config.items()) for r in recs[9:12]}
    ok = sorted((r for r in first if r.completed), key=lambda r: -r.value)
    assert 0 < len(ok) < 9
    expected = {tuple(r.config.items()) for r in ok[:3]}
    assert expected <= promoted


def test_all_failed_rung_aborts_bracket_but_not_run():
    bench = FailingBenchmark(lambda cfg, r: r < 1.0, noise=0.0)
    hist = run_hyperband(SPACE, LADDER, 3, BudgetSpec(max_trials=1000), bench, seed=0, max_brackets=5)
    # brackets s=4..1 abort at their first rung; s=0 runs entirely at r = 1
    assert len(hist) == 81 + 34 + 15 + 8 + 5
    assert sum(r.completed for r in hist) == 5


def test_hyperband_one_cycle_shape():
    bench = QuadraticBenchmark(SPACE, seed=0)
    hist = run_hyperband(SPACE, LADDER, 3, BudgetSpec(max_trials=205), bench, seed=7)
    assert len(hist) == 205
    low = sum(r.fraction <= 0.1 for r in hist)
    full = sum(r.fraction == 1.0 for r in hist)
    assert (low, full) == (115, 12)
    assert low > full
    s0 = [r for r in hist if r.annotations["s"] == 0]
    assert len(s0) == 5 and all(r.fraction == 1.0 for r in s0)
    assert len({tuple(sorted(r.config.items())) for r in s0}) == 5
    for r in hist:
        assert {"optimizer", "bracket", "s", "rung", "proposal"} <= set(r.annotations)


def test_hyperband_cycles_and_is_deterministic():
    a = run_hyperband(SPACE, LADDER, 3, BudgetSpec(max_trials=300), QuadraticBenchmark(SPACE), seed=2)
    b = run_hyperband(SPACE, LADDER, 3, BudgetSpec(max_trials=300), QuadraticBenchmark(SPACE), seed=2)
    assert len(a) == 300
    assert a[205].annotations["bracket"] == 5 and a[205].annotations["s"] == 4
    assert [(r.config, r.fraction, r.value) for r in a] == [(r.config, r.fraction, r.value) for r in b]
    c = run_hyperband(SPACE, LADDER, 3, BudgetSpec(max_trials=300), QuadraticBenchmark(SPACE), seed=3)
    assert a[0].config != c[0].config


def test_random_search_caps_and_determinism():
    bench = QuadraticBenchmark(SPACE)
    a = run_random_search(SPACE, LADDER, BudgetSpec(max_trials=5), bench, seed=1)
    b = run_random_search(SPACE, LADDER, BudgetSpec(max_trials=5), QuadraticBenchmark(SPACE), seed=1)
    assert len(a) == 5
    assert [(r.config, r.fraction) for r in a] == [(r.config, r.fraction) for r in b]
    assert all(r.fraction in LADDER for r in a)
    full = run_random_search(SPACE, LADDER, BudgetSpec(max_trials=20), bench, seed=1, full_fidelity_only=True)
    assert all(r.fraction == 1.0 for r in full)


def test_budget_floor_runs_one_trial():
    bench = QuadraticBenchmark(SPACE)
    hist = run_random_search(SPACE, LADDER, BudgetSpec(total_wallclock_seconds=1e-9), bench, seed=0)
    assert len(hist) == 1 and hist[0].completed
    hist = run_hyperband(SPACE, LADDER, 3, BudgetSpec(total_wallclock_seconds=1e-9), bench, seed=0)
    assert len(hist) >= 1


def test_wallclock_budget_stops_random_search():
    bench = QuadraticBenchmark(SPACE)  # each trial costs r simulated seconds
    hist = run_random_search(SPACE, LADDER, BudgetSpec(total_wallclock_seconds=10.0), bench, seed=0)
    spent = sum(r.total_wallclock_seconds for r in hist)
    assert spent >= 10.0 and spent - hist[-1].total_wallclock_seconds < 10.0


def test_budget_spec_validation():
    with pytest.raises(ValueError):
        BudgetSpec()
    with pytest.raises(ValueError):
        BudgetSpec(total_wallclock_seconds=0)
    with pytest.raises(ValueError):
        BudgetSpec(max_trials=0)


def test_ei_closed_form_value():
    assert expected_improvement(1.0, 1.0, 0.0) == pytest.approx(norm.cdf(1) + norm.pdf(1))
    assert float(expected_improvement(1.0, 1.0, 0.0)) == pytest.approx(1.0833, abs=1e-4)


def test_ei_matches_monte_carlo():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(1_000_000)
    for gap, sigma in [(-2, 0.5), (-1, 1), (-0.5, 2), (0, 0.1), (0, 1), (0.3, 0.3),
                       (0.5, 1.5), (1, 1), (2, 0.5), (-0.2, 3)]:
        mc = np.mean(np.maximum(0.0, gap + sigma * z))
        assert abs(float(expected_improvement(gap, sigma, 0.0)) - mc) < 1e-2


@settings(max_examples=300, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 5), st.floats(-5, 5))
def test_ei_nonnegative(mu, sigma, best):
    ei = float(expected_improvement(mu, sigma, best))
    assert ei >= 0
    if sigma == 0 and mu <= best:
        assert ei == 0
    assert ei >= max(0.0, mu - best) - 1e-12


def test_ei_vanishes_at_certain_incumbent():
    assert float(expected_improvement(0.7, 1e-12, 0.7)) < 1e-11


def test_gp_interpolates_noise_free_observations():
    rng = np.random.default_rng(4)
    X = rng.random((12, 3))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 - X[:, 2]
    gp = GaussianProcess(SurrogateState(X, y, [0.5, 0.5, 0.5], noise_variance=1e-12))
    mu, sd = gp.predict(X)
    assert np.max(np.abs(mu - y)) < 1e-6
    assert np.all(sd < 1e-3)


def test_fit_surrogate_positive_hyperparameters():
    rng = np.random.default_rng(5)
    X = rng.random((20, 8))
    y = -np.sum((X - 0.4) ** 2, axis=1)
    st_ = fit_surrogate(X, y, rng_seed=0)
    assert np.all(st_.length_scales > 0) and st_.noise_variance > 0 and st_.signal_variance > 0
    with pytest.raises(ValueError):
        SurrogateState(X, y, -np.ones(8))


def test_gp_ei_cold_start_is_random():
    one = SurrogateState(np.full((1, 8), 0.5), [0.3], np.ones(8))
    assert gp_ei_propose(one, SPACE, 64, rng_seed=9) == sample_config(SPACE, 9)


def test_gp_ei_returns_pool_argmax():
    rng = np.random.default_rng(6)
    configs = [sample_config(SPACE, int(s)) for s in rng.integers(0, 2**31, 30)]
    X = np.array([SPACE.to_unit(c) for c in configs])
    y = -np.sum((X - 0.5) ** 2, axis=1)
    state = fit_surrogate(X, y, 0)
    prop = gp_ei_propose(state, SPACE, 128, rng_seed=1)
    pool = [sample_config(SPACE, derive_seed(1, i)) for i in range(128)]
    mu, sd = GaussianProcess(state).predict(np.array([SPACE.to_unit(c) for c in pool]))
    ei = expected_improvement(mu, sd, y.max())
    assert prop == pool[int(np.argmax(ei))]
    assert ei.max() > 0


def test_bohb_rho_one_is_hyperband():
    b = BudgetSpec(max_trials=250)
    hb = run_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE, seed=3), seed=11)
    bo = run_model_based_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE, seed=3), seed=11, rho=1.0)
    assert [(r.config, r.fraction, r.value) for r in hb] == [(r.config, r.fraction, r.value) for r in bo]
    assert all(r.annotations["proposal"] == "random" for r in bo)


def test_bohb_first_bracket_matches_hyperband():
    b = BudgetSpec(max_trials=160)
    hb = run_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE), seed=5)
    bo = run_model_based_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE), seed=5)
    first = [r for r in bo if r.annotations["bracket"] == 0]
    assert [r.config for r in first] == [r.config for r in hb if r.annotations["bracket"] == 0]
    later = [r for r in bo if r.annotations["bracket"] == 1]
    assert any(r.annotations["proposal"] == "model" for r in later)


def test_bohb_is_deterministic():
    b = BudgetSpec(max_trials=160)
    x = run_model_based_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE), seed=8)
    y = run_model_based_hyperband(SPACE, LADDER, 3, b, QuadraticBenchmark(SPACE), seed=8)
    assert [(r.config, r.value) for r in x] == [(r.config, r.value) for r in y]


def test_bohb_not_worse_than_hyperband_on_quadratic_benchmark():
    budget = BudgetSpec(max_trials=410)
    hb_best, bo_best = [], []
    for seed in range(10):
        hb = run_hyperband(SPACE, LADDER, 3, budget, QuadraticBenchmark(SPACE, seed=100 + seed), seed)
        bo = run_model_based_hyperband(SPACE, LADDER, 3, budget, QuadraticBenchmark(SPACE, seed=100 + seed), seed)
        hb_best.append(max(r.value for r in hb if r.fraction == 1.0))
        bo_best.append(max(r.value for r in bo if r.fraction == 1.0))
    assert np.median(bo_best) >= np.median(hb_best)


def test_bracket_plan_n0():
    assert BracketPlan(0, (Rung(5, 1.0),)).n0 == 5
