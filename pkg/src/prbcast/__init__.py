"""Probabilistic PRB-utilization forecasting engine with an rApp-style HTTP service."""

__version__ = "0.1.0"
