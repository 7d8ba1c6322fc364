"""Histopathology super-resolution evaluation toolkit."""

__version__ = "0.1.0"
