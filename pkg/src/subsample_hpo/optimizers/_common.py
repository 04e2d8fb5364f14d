"""Seed derivation and budget bookkeeping shared by the optimizers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# stream tags for derive_seed
CONFIG, FIDELITY, TRIAL, COIN, PROPOSE, SURROGATE = range(1, 7)


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream addressed by ``keys``."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class BudgetSpec:
    total_wallclock_seconds: float | None = None
    max_trials: int | None = None

    def __post_init__(self):
        if self.total_wallclock_seconds is None and self.max_trials is None:
            raise ValueError("budget needs a wallclock limit, a trial limit, or both")
        if self.total_wallclock_seconds is not None and not self.total_wallclock_seconds > 0:
            raise ValueError("wallclock budget must be positive")
        if self.max_trials is not None and self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")


class Budget:
    """Tracks consumption: trial count and cumulative end-to-end trial wallclock."""

    def __init__(self, spec: BudgetSpec):
        self.spec = spec
        self.trials = 0
        self.seconds = 0.0

    def charge(self, records) -> None:
        for rec in records:
            self.trials += 1
            self.seconds += rec.total_wallclock_seconds

    @property
    def exhausted(self) -> bool:
        if self.trials == 0:
            return False  # never stop with zero information
        if self.spec.max_trials is not None and self.trials >= self.spec.max_trials:
            return True
        lim = self.spec.total_wallclock_seconds
        return lim is not None and self.seconds >= lim

    def remaining_trials(self) -> int | float:
        if self.spec.max_trials is None:
            return math.inf
        return max(0, self.spec.max_trials - self.trials)
