"""Numerical solver and verification suite for cyclic Hitchin ladder systems."""

__version__ = "0.1.0"
