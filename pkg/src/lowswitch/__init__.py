"""Low-switching, variance-reduced Q-learning for tabular discounted MDPs."""

__version__ = "0.1.0"
