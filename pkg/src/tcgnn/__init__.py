"""Exact p-bit floating-point GNNs lowered to threshold circuits."""

__version__ = "0.1.0"
