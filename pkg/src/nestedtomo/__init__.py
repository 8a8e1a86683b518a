"""Nested-array TomoSAR: co-array geometry, covariance-domain sparse recovery
and Monte Carlo evaluation."""

__version__ = "0.1.0"
