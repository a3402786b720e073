"""Numerical helpers shared across the pipelines."""

from .bessel import bessel_j_orders, bessel_j_range, bessel_jn
from .numerics import branch_sqrt

__all__ = ["bessel_j_orders", "bessel_j_range", "bessel_jn", "branch_sqrt"]
