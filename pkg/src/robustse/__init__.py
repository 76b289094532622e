"""Robust state estimation by sparse error correction."""
__version__ = "0.1.0"
