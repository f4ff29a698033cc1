"""Fluid limits and asymptotic covariances of random count processes."""

__version__ = "0.1.0"
