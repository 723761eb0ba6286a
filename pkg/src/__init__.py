"""Predictive learning-aided control for stochastic queueing networks."""

__version__ = "0.1.0"
