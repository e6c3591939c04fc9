"""Fisher-information-constrained training for time series classification."""

__version__ = "0.1.0"
