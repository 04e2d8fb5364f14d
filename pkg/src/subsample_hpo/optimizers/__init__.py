"""Tuning strategies: random search, Successive Halving, Hyperband, model-based Hyperband."""
from ._common import Budget, BudgetSpec, derive_seed
from .bohb import run_model_based_hyperband, surrogate_observations
from .gp import GaussianProcess, SurrogateState, expected_improvement, fit_surrogate, gp_ei_propose
from .hyperband import (
    BracketAborted,
    BracketPlan,
    Candidate,
    Rung,
    hyperband_schedule,
    promote,
    run_hyperband,
    successive_halving,
)
from .random_search import run_random_search

__all__ = [
    "BracketAborted",
    "BracketPlan",
    "Budget",
    "BudgetSpec",
    "Candidate",
    "GaussianProcess",
    "Rung",
    "SurrogateState",
    "derive_seed",
    "expected_improvement",
    "fit_surrogate",
    "gp_ei_propose",
    "hyperband_schedule",
    "promote",
    "run_hyperband",
    "run_model_based_hyperband",
    "run_random_search",
    "successive_halving",
    "surrogate_observations",
]
