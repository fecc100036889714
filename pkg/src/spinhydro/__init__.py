"""Dipolar spin-chain toolkit: pulse-engineered Hamiltonians, disorder-based
random observables, infinite-temperature transport and rotation-scan tomography."""

__version__ = "0.1.0"
