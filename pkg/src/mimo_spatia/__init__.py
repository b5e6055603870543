"""Spatially correlated massive-MIMO covariance models and MMSE estimation experiments."""

__version__ = "0.1.0"
