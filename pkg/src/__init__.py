"""Resonances of strips with distant perturbations."""

__version__ = "1.0.0"
