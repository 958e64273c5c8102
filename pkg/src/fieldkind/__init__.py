"""Numerical classification of vector fields on Riemannian charts as
Killing, global Jacobi and solenoidal."""

__version__ = "0.1.0"
