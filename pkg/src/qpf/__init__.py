"""Quantum and hybrid solvers for DC power flow, simulated on a statevector."""

__version__ = "0.1.0"
