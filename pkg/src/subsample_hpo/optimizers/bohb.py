"""Model-based Hyperband: Hyperband scheduling with GP/EI-proposed bracket members."""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..dataio import FidelityLadder
from ..executor import Executor, TrialRecord
from ..search_space import HyperparamSpace, sample_config
from ._common import COIN, CONFIG, PROPOSE, SURROGATE, BudgetSpec, derive_seed
from .gp import SurrogateState, fit_surrogate, propose
from .hyperband import _hyperband_loop


def surrogate_observations(space: HyperparamSpace, history: list[TrialRecord]):
    """Completed observations at the highest fidelity with at least ``d + 2`` of them, or None."""
    by_r = defaultdict(list)
    for rec in history:
        if rec.completed:
            by_r[rec.fraction].append(rec)
    for r in sorted(by_r, reverse=True):
        if len(by_r[r]) >= len(space) + 2:
            recs = by_r[r]
            X = np.array([space.to_unit(rec.config) for rec in recs])
            y = np.array([rec.value for rec in recs])
            return r, X, y
    return None


def run_model_based_hyperband(space: HyperparamSpace, ladder: FidelityLadder, eta: int, budget: BudgetSpec,
                              executor: Executor, seed: int = 0, rho: float = 1 / 3,
                              candidate_pool_size: int = 256, max_brackets: int | None = None) -> list[TrialRecord]:
    """Hyperband whose new configurations come from the surrogate with probability ``1 - rho``.

    The surrogate is refit once per bracket on the trials completed so far;
    until some fidelity has ``d + 2`` completed trials every draw is random.
    With ``rho = 1`` the run is identical to :func:`run_hyperband`.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    cache: dict[int, SurrogateState | None] = {}

    def proposer(b: int, j: int, history: list[TrialRecord]):
        random_config = sample_config(space, derive_seed(seed, CONFIG, b, j))
        coin = np.random.default_rng(derive_seed(seed, COIN, b, j)).random()
        if coin < rho:
            return random_config, "random"
        if b not in cache:
            obs = surrogate_observations(space, history)
            cache.clear()
            cache[b] = None if obs is None else fit_surrogate(obs[1], obs[2], derive_seed(seed, SURROGATE, b))
        state = cache[b]
        if state is None:
            return random_config, "random"
        config, used_model = propose(state, space, candidate_pool_size, derive_seed(seed, PROPOSE, b, j))
        return (config, "model") if used_model else (random_config, "random")

    return _hyperband_loop(space, ladder, eta, budget, executor, seed, "bohb", proposer=proposer,
                           max_brackets=max_brackets)
