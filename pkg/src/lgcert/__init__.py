"""Solver and regularity certifier for the anisotropic least gradient problem."""

__version__ = "0.1.0"
