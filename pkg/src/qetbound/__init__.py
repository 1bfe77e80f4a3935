"""Exact-diagonalization laboratory for energy teleportation bounds on gapped spin chains."""

__version__ = "0.1.0"
