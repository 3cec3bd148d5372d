"""Lossless compression of multi-link traffic time series with learned predictors."""

__version__ = "0.1.0"
