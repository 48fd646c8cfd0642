"""Predictive Bayesian prior design."""
__version__ = "0.1.0"
