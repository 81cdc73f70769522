"""Time-varying and contextual Bayesian optimization for dynamic MEC management."""

__version__ = "0.1.0"
