"""Exact and numerical ingredients of the equivariant Ray-Singer metric anomaly."""

__version__ = "0.1.0"
