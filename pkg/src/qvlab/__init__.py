"""Pathwise quadratic-variation laboratory for cadlag Dirichlet processes."""

__version__ = "0.1.0"
