"""Numerical laboratory for SRB measures of partially hyperbolic torus endomorphisms."""

__version__ = "0.1.0"
