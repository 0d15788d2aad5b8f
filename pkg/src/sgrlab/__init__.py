"""Iterative and optimization-based PDE solvers under MSE, QP, GR and SGR losses."""

__version__ = "0.1.0"
