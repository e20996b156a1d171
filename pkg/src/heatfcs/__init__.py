"""Exact heat full counting statistics for finite and quasi-free multi-reservoir systems."""

__version__ = "0.1.0"
