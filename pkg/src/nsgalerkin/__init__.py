"""Spectral Faedo-Galerkin solver for 2D Navier-Stokes with rough forcing."""

__version__ = "0.1.0"
