"""Numerical laboratory for shrinking-target sets of interval maps."""

__version__ = "0.1.0"
