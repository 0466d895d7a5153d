"""Predictor-based neural architecture search over tabular benchmarks."""

__version__ = "0.1.0"
