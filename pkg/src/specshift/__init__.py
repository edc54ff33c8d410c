"""Spectral size-shift toolkit for graph classification."""

__version__ = "0.1.0"
