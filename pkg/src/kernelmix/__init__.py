"""Kernel mixture networks for conditional density estimation and filtering."""

__version__ = "0.1.0"
