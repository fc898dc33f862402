"""Equilibria of games where firms act on biased demand-sensitivity estimates."""

__version__ = "0.1.0"
