"""Trainable population-based meta-optimizer with attention, plus baselines and a benchmark harness."""

__version__ = "0.1.0"
