"""Built-in boosted-tree trainer used as the default trial objective."""
from .model import (
    BoostedModel,
    LearnerError,
    Tree,
    evaluate,
    fit,
    predict,
    predict_margin,
    train,
    training_loss,
)

__all__ = [
    "BoostedModel",
    "LearnerError",
    "Tree",
    "evaluate",
    "fit",
    "predict",
    "predict_margin",
    "train",
    "training_loss",
]
