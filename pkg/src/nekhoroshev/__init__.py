"""Exponential stability estimates for nearly integrable Hamiltonian systems."""

__version__ = "0.1.0"
