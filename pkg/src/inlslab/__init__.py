"""Numerical laboratory for the radial 3D focusing cubic INLS equation."""

__version__ = "0.1.0"
