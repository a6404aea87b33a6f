"""Perturbed-spectrum representations of functions on the real line."""

__version__ = "0.1.0"
