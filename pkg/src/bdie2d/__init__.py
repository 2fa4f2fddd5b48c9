"""Boundary-domain integral equation solver for the exterior 2D Dirichlet
problem with a variable scalar diffusion coefficient."""

__version__ = "0.1.0"
