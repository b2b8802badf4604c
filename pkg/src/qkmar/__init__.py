"""Quantum and classical kernel classification of SAR image chips."""

__version__ = "0.1.0"
