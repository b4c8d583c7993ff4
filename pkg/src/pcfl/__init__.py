"""Equilibrium solvers for self-organised federated learning games."""

__version__ = "0.1.0"
