"""Backend dispatch between numpy arrays and mpmath scalars.

Laplace-domain kernels are evaluated either on float64 node batches (vector
Talbot, contour quadrature) or on single ``mpc`` points inside mpmath's
multiprecision Talbot rule. Kernels pick their elementary functions through
:func:`ops` so one formula serves both.
"""

from __future__ import annotations

from typing import Any

import mpmath
import numpy as np

_MP_TYPES = (mpmath.mpc, mpmath.mpf)


def is_mp(*values: Any) -> bool:
    return any(isinstance(value, _MP_TYPES) for value in values)


def ops(*values: Any) -> Any:
    """Return ``mpmath`` when any argument is multiprecision, else ``numpy``."""
    return mpmath if is_mp(*values) else np


def as_complex(value: Any) -> Any:
    if is_mp(value):
        return mpmath.mpc(value)
    return np.asarray(value, dtype=np.complex128)


def lift(value: float, like: Any) -> Any:
    """Promote a float parameter to the precision of ``like``."""
    if is_mp(like):
        return mpmath.mpf(value)
    return value


def branch_sqrt(s: Any, omega: Any) -> Any:
    """sqrt(s^2 + omega^2) with its cut on the segment [-i*omega, i*omega].

    Written as s*sqrt(1 + (omega/s)^2) with the principal root; the value at
    s = 0 is omega.
    """
    if is_mp(s, omega):
        s = mpmath.mpc(s)
        if s == 0:
            return mpmath.mpc(omega)
        return s * mpmath.sqrt(1 + (omega / s) ** 2)
    s_arr = np.asarray(s, dtype=np.complex128)
    omega_arr = np.asarray(omega, dtype=np.float64)
    zero = s_arr == 0
    safe = np.where(zero, 1.0, s_arr)
    root = safe * np.sqrt(1.0 + (omega_arr / safe) ** 2)
    root = np.where(zero, omega_arr + 0j, root)
    return root[()] if root.ndim == 0 else root


def is_finite(value: Any) -> bool:
    if is_mp(value):
        return bool(mpmath.isfinite(value))
    return bool(np.all(np.isfinite(value)))
