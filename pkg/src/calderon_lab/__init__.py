"""Numerical lab for the conformal Laplacian inverse problem on slab manifolds."""

__version__ = "0.1.0"
