"""Finite-volume laboratory for integrated densities of states of H0 + lam V."""

__version__ = "0.1.0"
