"""Numerical laboratory for the regularized normalized p(x)-Laplace equation."""

__version__ = "0.1.0"
