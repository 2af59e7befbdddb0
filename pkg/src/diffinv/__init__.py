"""Inversions and Doob h-transform duals of regular linear diffusions."""

__version__ = "0.1.0"
