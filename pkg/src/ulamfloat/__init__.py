"""Ulam floating functions, floating functions and affine surface areas."""

__version__ = "0.1.0"
