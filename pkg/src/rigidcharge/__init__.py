"""Spectral Maxwell-Lorentz dynamics of rigid extended charges."""

__version__ = "0.1.0"
