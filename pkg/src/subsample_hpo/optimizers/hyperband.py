"""Successive Halving and Hyperband over a fidelity ladder of data fractions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

from ..dataio import FidelityLadder
from ..executor import Executor, TrialRecord, TrialRequest
from ..search_space import HyperparamSpace, sample_config
from ._common import CONFIG, TRIAL, Budget, BudgetSpec, derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rung:
    n: int
    fraction: float


@dataclass(frozen=True)
class BracketPlan:
    s: int
    rungs: tuple[Rung, ...]

    @property
    def n0(self) -> int:
        return self.rungs[0].n


@dataclass
class Candidate:
    config: dict
    trial_seed: int
    index: int  # sampling order within the bracket; lower wins ties
    source: str = "random"


class BracketAborted(RuntimeError):
    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


def _check_eta(eta) -> int:
    if isinstance(eta, bool) or int(eta) != eta or eta < 2:
        raise ValueError(f"eta must be an integer >= 2, got {eta!r}")
    return int(eta)


def max_bracket_index(ladder: FidelityLadder, eta: int) -> int:
    """floor(log_eta(r_max / r_min)), computed without float log error."""
    ratio = ladder.r_max / ladder.r_min
    s = 0
    while eta ** (s + 1) <= ratio * (1 + 1e-12):
        s += 1
    return s


def hyperband_schedule(ladder: FidelityLadder, eta: int = 3) -> list[BracketPlan]:
    """Bracket plans from most exploratory (s = s_max) to full-fidelity only (s = 0).

    Geometric rung fractions ``r_max * eta**(i - s)`` are rounded up to the
    nearest ladder fraction. Rungs that land on the same fraction collapse into
    one, and counts follow ``n_{i+1} = floor(n_i / eta)`` over the surviving rungs.
    """
    eta = _check_eta(eta)
    if len(ladder) < 2:
        raise ValueError("a single-fraction ladder leaves nothing to schedule")
    s_max = max_bracket_index(ladder, eta)
    plans = []
    for s in range(s_max, -1, -1):
        n = -(-(s_max + 1) * eta ** s // (s + 1))  # ceil with integer arithmetic
        fractions = []
        for i in range(s + 1):
            f = ladder.ceil(ladder.r_max * eta ** (i - s))
            if not fractions or f != fractions[-1]:
                fractions.append(f)
        rungs = []
        for f in fractions:
            rungs.append(Rung(n, f))
            n //= eta
        plans.append(BracketPlan(s, tuple(rungs)))
    return plans


def promote(records: list[TrialRecord], candidates: list[Candidate], k: int) -> list[Candidate]:
    """Top ``k`` candidates by score (failures last); ties go to the earlier-sampled one."""
    order = sorted(range(len(candidates)), key=lambda j: (-records[j].value, candidates[j].index))
    return [candidates[j] for j in order[:k]]


def successive_halving(candidates: list[Candidate], rungs, executor: Executor, eta: int = 3,
                       budget: Budget | None = None, annotations: dict | None = None):
    """Run one bracket. Returns ``(records, survivor, stopped)``.

    ``stopped`` is True when the budget ran out mid-bracket. The survivor is
    the best candidate at the last rung reached (None if nothing ran).
    """
    eta = _check_eta(eta)
    current = list(candidates)
    history: list[TrialRecord] = []
    last = None
    for i, rung in enumerate(rungs):
        if budget is not None and budget.exhausted:
            return history, _best(last), True
        batch = current
        if budget is not None:
            batch = current[:int(min(len(current), budget.remaining_trials()))]
        reqs = [TrialRequest(c.config, rung.fraction, c.trial_seed,
                             {**(annotations or {}), "rung": i, "proposal": c.source}) for c in batch]
        recs = executor.run_batch(reqs)
        history.extend(recs)
        if budget is not None:
            budget.charge(recs)
        if not any(r.completed for r in recs):
            raise BracketAborted(f"all {len(recs)} trials failed at rung {i} (r={rung.fraction})", history)
        last = (recs, batch)
        if len(batch) < len(current):
            return history, _best(last), True
        if i + 1 < len(rungs):
            current = promote(recs, batch, rungs[i + 1].n)
    return history, _best(last), False


def _best(last):
    if last is None:
        return None
    recs, cands = last
    return promote(recs, cands, 1)[0]


# proposer(bracket_counter, j, history) -> (config, source)
Proposer = Callable[[int, int, list], tuple]


def _hyperband_loop(space: HyperparamSpace, ladder: FidelityLadder, eta: int, budget_spec: BudgetSpec,
                    executor: Executor, seed: int, name: str, proposer: Proposer | None = None,
                    max_brackets: int | None = None) -> list[TrialRecord]:
    plans = hyperband_schedule(ladder, eta)
    budget = Budget(budget_spec)
    history: list[TrialRecord] = []
    b = 0
    while not budget.exhausted and (max_brackets is None or b < max_brackets):
        plan = plans[b % len(plans)]
        cands = []
        for j in range(plan.n0):
            if proposer is None:
                config, source = sample_config(space, derive_seed(seed, CONFIG, b, j)), "random"
            else:
                config, source = proposer(b, j, history)
            cands.append(Candidate(config, derive_seed(seed, TRIAL, b, j), j, source))
        ann = {"optimizer": name, "bracket": b, "s": plan.s}
        try:
            recs, _, stopped = successive_halving(cands, plan.rungs, executor, eta, budget, ann)
        except BracketAborted as exc:
            log.warning("bracket %d aborted: %s", b, exc)
            recs, stopped = exc.records, False
        history.extend(recs)
        b += 1
        if stopped:
            break
    return history


def run_hyperband(space: HyperparamSpace, ladder: FidelityLadder, eta: int, budget: BudgetSpec,
                  executor: Executor, seed: int = 0, max_brackets: int | None = None) -> list[TrialRecord]:
    """Cycle through the Hyperband brackets with freshly sampled configurations until the budget is spent."""
    return _hyperband_loop(space, ladder, eta, budget, executor, seed, "hyperband",
                           max_brackets=max_brackets)
