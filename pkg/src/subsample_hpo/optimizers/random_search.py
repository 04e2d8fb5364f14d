from __future__ import annotations

import numpy as np

from ..dataio import FidelityLadder
from ..executor import Executor, TrialRecord, TrialRequest
from ..search_space import HyperparamSpace, sample_config
from ._common import CONFIG, FIDELITY, TRIAL, Budget, BudgetSpec, derive_seed


def run_random_search(space: HyperparamSpace, ladder: FidelityLadder, budget: BudgetSpec,
                      executor: Executor, seed: int = 0, full_fidelity_only: bool = False) -> list[TrialRecord]:
    """Randomized search baseline.

    Each trial pairs a fresh configuration with a fidelity drawn uniformly
    from the ladder (or always ``r_max`` with ``full_fidelity_only``).
    Trials are dispatched in batches of ``executor.parallelism``; the budget
    is checked between batches.
    """
    tracker = Budget(budget)
    history: list[TrialRecord] = []
    i = 0
    while not tracker.exhausted:
        size = int(min(executor.parallelism, tracker.remaining_trials()))
        reqs = []
        for k in range(i, i + size):
            config = sample_config(space, derive_seed(seed, CONFIG, k))
            if full_fidelity_only:
                r = ladder.r_max
            else:
                rng = np.random.default_rng(derive_seed(seed, FIDELITY, k))
                r = ladder.fractions[int(rng.integers(len(ladder)))]
            reqs.append(TrialRequest(config, r, derive_seed(seed, TRIAL, k),
                                     {"optimizer": "random", "index": k, "proposal": "random"}))
        i += size
        recs = executor.run_batch(reqs)
        tracker.charge(recs)
        history.extend(recs)
    return history
