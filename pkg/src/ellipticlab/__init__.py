"""Numerical lab for divergence-form elliptic operators on periodic grids."""

__version__ = "0.1.0"
