from __future__ import annotations

import sys
from pathlib import Path

import pytest

from subsample_hpo.synth import SynthSpec, make_synthetic

STUB = Path(__file__).parent / "stubs" / "stub_trainer.py"


def stub_command(mode: str) -> tuple:
    return (sys.executable, str(STUB), mode)


@pytest.fixture(scope="session")
def small_regression():
    return make_synthetic(SynthSpec(n_rows=400, n_features=5, noise=0.1, seed=3))


@pytest.fixture(scope="session")
def small_binary():
    return make_synthetic(SynthSpec(task="binary", n_rows=400, n_features=5, noise=0.1, seed=4))


@pytest.fixture(scope="session")
def small_multiclass():
    return make_synthetic(SynthSpec(task="multiclass", n_rows=600, n_features=5, noise=0.1, seed=5, n_classes=3))


def cheap_config(**over) -> dict:
    cfg = {"eta": 0.3, "alpha": 1e-6, "lambda": 1.0, "gamma": 1e-6, "subsample": 1.0,
           "col_subsample": 1.0, "max_depth": 3.0, "num_round": 10.0}
    cfg.update(over)
    return cfg
