"""Correlation dynamics of the XX spin chain under dephasing."""

__all__ = ["__version__"]
__version__ = "0.1.0"
