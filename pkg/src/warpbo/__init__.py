"""Bayesian optimization with Beta-CDF input warping and MCMC-averaged expected improvement."""

__version__ = "0.1.0"
