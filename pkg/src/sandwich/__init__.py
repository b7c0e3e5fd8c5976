"""Sandwiching polynomials for geometric concepts under Gaussian-like measures."""

__version__ = "0.1.0"
