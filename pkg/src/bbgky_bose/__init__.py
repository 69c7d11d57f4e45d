"""Truncated BBGKY hierarchy simulator for the two-site Bose-Hubbard model."""

__version__ = "0.1.0"
