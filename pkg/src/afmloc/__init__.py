"""Waveform-based earthquake location with auxiliary functions."""

__version__ = "0.1.0"
