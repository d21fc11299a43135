"""Numerical toolkit for Dirichlet problems driven by the g-Laplacian."""
__version__ = "0.1.0"
