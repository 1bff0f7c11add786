"""Desk-scale closed-loop unsupervised speech translation."""

__version__ = "0.1.0"
