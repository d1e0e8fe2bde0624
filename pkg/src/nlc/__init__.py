"""Nonlinear consensus dynamics x' = D^-1 A s(x) - x on undirected graphs."""

__version__ = "0.1.0"
