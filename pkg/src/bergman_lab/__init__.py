"""Numerical toolkit for weighted harmonic Bergman spaces on the unit ball."""

__version__ = "0.1.0"
