"""Doubly robust Bayesian estimation of finite-population means from a
non-probability sample pooled with a reference probability survey."""

__version__ = "0.1.0"
