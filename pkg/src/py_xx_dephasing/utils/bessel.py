"""Integer-order Bessel J by Miller backward recurrence."""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike

_RESCALE = 1e200
_SEED = 1e-30


def _start_order(n_max: int, x: float) -> int:
    start = n_max + 20 + math.ceil(x)
    start += math.ceil(math.sqrt(40.0 * max(n_max, x)))
    return start + (start % 2)


def bessel_j_range(n_max: int, z: float) -> np.ndarray:
    """Return J_0(z) .. J_{n_max}(z).

    The recurrence J_{k-1} = (2k/z) J_k - J_{k+1} runs downward from an order
    well above ``n_max`` and is normalised with J_0 + 2*sum(J_2k) = 1.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    out = np.zeros(n_max + 1)
    if z == 0.0:
        out[0] = 1.0
        return out
    x = abs(float(z))
    start = _start_order(n_max, x)
    upper, current = 0.0, _SEED
    norm = 2.0 * current
    for k in range(start, 0, -1):
        lower = (2.0 * k / x) * current - upper
        upper, current = current, lower
        order = k - 1
        if order <= n_max:
            out[order] = current
        if order % 2 == 0:
            norm += current if order == 0 else 2.0 * current
        if abs(current) > _RESCALE:
            upper /= _RESCALE
            current /= _RESCALE
            norm /= _RESCALE
            out /= _RESCALE
    out /= norm
    if z < 0:
        out[1::2] *= -1.0
    return out


def bessel_jn(n: int, z: float) -> float:
    order = abs(int(n))
    value = float(bessel_j_range(order, z)[order])
    if n < 0 and order % 2:
        value = -value
    return value


def bessel_j_orders(orders: ArrayLike, z: float) -> np.ndarray:
    """Vectorised J_n(z) over an array of (possibly negative) integer orders."""
    n = np.asarray(orders, dtype=np.int64)
    if n.size == 0:
        return np.zeros(n.shape)
    table = bessel_j_range(int(np.max(np.abs(n))), z)
    values = table[np.abs(n)]
    odd_negative = (n < 0) & (np.abs(n) % 2 == 1)
    return np.where(odd_negative, -values, values)
