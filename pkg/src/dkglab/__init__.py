"""Numerical laboratory for the Dirac--Klein-Gordon system in 1+2 and 1+3 dimensions."""

__version__ = "0.1.0"
