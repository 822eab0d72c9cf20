"""Verification tools for boundary Dehn twists built from commuting involutions."""

__version__ = "0.1.0"
