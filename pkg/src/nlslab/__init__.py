"""Numerical laboratory for the focusing nonlinear Schrödinger equation."""

__version__ = "0.1.0"
