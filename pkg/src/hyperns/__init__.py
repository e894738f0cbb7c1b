"""Pseudo-spectral solver and energy-method diagnostics for hyperdissipative Navier-Stokes."""

__version__ = "0.1.0"
