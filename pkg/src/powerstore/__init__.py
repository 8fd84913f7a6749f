"""Robust erasure-coded atomic storage protocols over a simulated network."""

__version__ = "0.1.0"
