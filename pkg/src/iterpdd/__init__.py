"""Iterative probabilistic domain decomposition for elliptic Dirichlet problems."""

__version__ = "0.1.0"
