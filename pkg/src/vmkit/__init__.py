"""Geometry, fusion, matching and evaluation core for online vectorized HD-map construction."""

__version__ = "0.1.0"
