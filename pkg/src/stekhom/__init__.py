"""Spectral geometry of perforated surfaces and free boundary minimal surfaces."""

__version__ = "0.1.0"
