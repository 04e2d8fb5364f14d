"""Multi-fidelity hyperparameter optimization over uniformly subsampled training data."""

__version__ = "0.1.0"
