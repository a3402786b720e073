"""Transfer-matrix construction of the Laplace-domain resolvent (s - A)^-1.

The first column G_l = [(s - A)^-1]_{l,0} obeys a two-term recurrence in l,
so (G_{l-1}, G_l) = T (G_l, G_{l+1}) in the bulk and (1, G_0) = T0 (G_0, G_1)
at the boundary. Periodicity closes the chain with G_L = eta * G_0.

Closed forms are written with ratios sin(alpha a) / sin(alpha b) evaluated
as exp(-i alpha (a - b)) (1 - e^{2i alpha a}) / (1 - e^{2i alpha b}) with
Im alpha >= 0, which stays finite for Im(alpha) * L far beyond 700.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

import mpmath
import numpy as np
from numpy.typing import ArrayLike

from .model import ChainParams, ModelError, NumericalError, corner_phase, dispersion
from .utils.numerics import is_mp, lift, ops

logger = logging.getLogger(__name__)

_BRANCH_TOL = 1e-14
_DEGENERATE_TOL = 1e-12
_RETRY_FACTOR = 1.0 + 1e-9
_RESCALE_PERIOD = 16


class SingularInputError(NumericalError):
    """Raised when an input sits on a branch point or an excluded value."""


class DegenerateAngleError(NumericalError):
    """Raised when sin(alpha) or sin(alpha L) vanishes."""


class SingularRelationError(NumericalError):
    """Raised when the boundary relation of a transfer product is singular."""


@dataclass(frozen=True, eq=False)
class TransferPair:
    """Boundary matrix T0 and bulk matrix T at one (s, q)."""

    T0: np.ndarray
    T: np.ndarray
    u: complex

    @property
    def det_error(self) -> float:
        return float(abs(np.linalg.det(self.T) - 1.0))


@dataclass(frozen=True)
class BranchAngle:
    """alpha = arccos(-i u) on the branch with Im(alpha) > 0 for Re(u) > 0."""

    alpha: Any
    u: Any


def transfer_pair(s: complex, q: float, p: ChainParams) -> TransferPair:
    omega = dispersion(q, p.J)
    if omega == 0:
        raise SingularInputError("the omega = 0 mode has no bulk transfer matrix")
    u = (s + 4.0 * p.gamma) / omega
    T0 = np.array([[s, -1j * omega], [1.0, 0.0]], dtype=np.complex128)
    T = np.array([[-2j * u, -1.0], [1.0, 0.0]], dtype=np.complex128)
    return TransferPair(T0=T0, T=T, u=complex(u))


def arccos_branch(u: Any) -> BranchAngle:
    """alpha = pi/2 + i log(u + sqrt(u^2 + 1)) with principal log and root."""
    xp = ops(u)
    root_arg = u * u + 1
    if np.ndim(u) == 0 and abs(complex(root_arg)) < _BRANCH_TOL:
        raise SingularInputError(f"u={complex(u)} is a branch point of arccos(-iu)")
    alpha = xp.pi / 2 + 1j * xp.log(u + xp.sqrt(root_arg))
    return BranchAngle(alpha=alpha, u=u)


def bulk_power_closed(alpha: BranchAngle | complex, m: int) -> np.ndarray:
    """T^m from Chebyshev sines: (1/sin a)[[S(m+1), -S(m)], [S(m), -S(m-1)]]."""
    if m < 0:
        raise ModelError("bulk power needs m >= 0")
    a = complex(alpha.alpha if isinstance(alpha, BranchAngle) else alpha)
    sin_a = np.sin(a)
    if abs(sin_a) < _DEGENERATE_TOL:
        raise DegenerateAngleError(f"sin(alpha) vanishes at alpha={a}")
    S = np.sin(a * np.array([m + 1, m, m - 1]))
    return np.array([[S[0], -S[1]], [S[1], -S[2]]], dtype=np.complex128) / sin_a


def _upper_angle(alpha: Any) -> Any:
    if is_mp(alpha):
        return -alpha if mpmath.im(alpha) < 0 else alpha
    return np.where(np.imag(alpha) < 0, -alpha, alpha)


def _sine_ratio(alpha: Any, a: int, b: int) -> Any:
    xp = ops(alpha)
    return (
        xp.exp(-1j * alpha * (a - b))
        * (1 - xp.exp(2j * alpha * a))
        / (1 - xp.exp(2j * alpha * b))
    )


def _column_entry(
    s: Any, omega: Any, eta: Any, gamma: float, L: int, l: int
) -> tuple[Any, Any]:
    """G_{l,0} for omega != 0 plus the degeneracy indicator |1 - e^{2i alpha L}|."""
    xp = ops(s)
    u = (s + lift(4.0 * gamma, s)) / omega
    alpha = _upper_angle(arccos_branch(u).alpha)
    gap = abs(1 - xp.exp(2j * alpha * L))
    ratio = _sine_ratio(alpha, L - 1, L) + eta * _sine_ratio(alpha, 1, L)
    g00 = 1 / (s - 1j * omega * ratio)
    if l == 0:
        return g00, gap
    shape = _sine_ratio(alpha, L - l, L) + eta * _sine_ratio(alpha, l, L)
    return g00 * shape, gap


def finite_kernel(
    s: Any, omega: Any, eta: Any, gamma: float, L: int, l: int = 0
) -> Any:
    """[(s - A)^-1]_{l,0} for one or many (s, mode) pairs.

    ``s`` may be an mpmath scalar or a numpy array broadcasting against
    ``omega`` and ``eta``. The omega = 0 mode decouples: 1/s at l = 0, else 0.
    """
    if not 0 <= l < L:
        raise ModelError(f"off-diagonal order must satisfy 0 <= l < L, got {l}")
    if is_mp(s):
        if omega == 0:
            return 1 / s if l == 0 else mpmath.mpc(0)
        omega_mp = mpmath.mpf(omega)
        eta_mp = mpmath.mpc(eta)
        value, gap = _column_entry(s, omega_mp, eta_mp, gamma, L, l)
        if gap < _DEGENERATE_TOL:
            s_retry = s * _RETRY_FACTOR
            logger.debug("Degenerate angle at s=%s; retrying at %s", s, s_retry)
            value, gap = _column_entry(s_retry, omega_mp, eta_mp, gamma, L, l)
            if gap < _DEGENERATE_TOL:
                raise DegenerateAngleError(f"sin(alpha L) vanishes near s={complex(s)}")
        return value

    s_arr = np.asarray(s, dtype=np.complex128)
    omega_arr = np.asarray(omega, dtype=np.float64)
    eta_arr = np.asarray(eta, dtype=np.complex128)
    zero = omega_arr == 0
    safe_omega = np.where(zero, 1.0, omega_arr)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        value, gap = _column_entry(s_arr, safe_omega, eta_arr, gamma, L, l)
        bad = (gap < _DEGENERATE_TOL) & ~zero
        if np.any(bad):
            logger.debug("Degenerate angle at %d points; retrying", int(np.sum(bad)))
            retry, gap_retry = _column_entry(
                s_arr * _RETRY_FACTOR, safe_omega, eta_arr, gamma, L, l
            )
            if np.any(bad & (gap_retry < _DEGENERATE_TOL)):
                raise DegenerateAngleError("sin(alpha L) vanishes after retry")
            value = np.where(bad, retry, value)
        decoupled = 1.0 / s_arr if l == 0 else np.zeros_like(s_arr)
    value = np.where(zero, decoupled, value)
    return value[()] if value.ndim == 0 else value


def _mode_constants(q: ArrayLike, p: ChainParams) -> tuple[Any, Any]:
    omega = dispersion(q, p.J)
    if np.ndim(q) == 0:
        return omega, corner_phase(float(q), p.L)
    eta = np.array([corner_phase(float(v), p.L) for v in np.ravel(q)])
    return omega, eta.reshape(np.shape(q))


def g00_finite(s: Any, q: ArrayLike, p: ChainParams) -> Any:
    """[(s - A(q))^-1]_{0,0} in closed form."""
    omega, eta = _mode_constants(q, p)
    return finite_kernel(s, omega, eta, p.gamma, p.L, 0)


def gl0_finite(s: Any, q: ArrayLike, l: int, p: ChainParams) -> Any:
    """[(s - A(q))^-1]_{l,0} in closed form."""
    omega, eta = _mode_constants(q, p)
    return finite_kernel(s, omega, eta, p.gamma, p.L, l)


@dataclass(frozen=True, eq=False)
class BoundaryClosure:
    """Linear closure v = e_top_rhs + E_top z, w = E_bot z for the unknowns z.

    ``v`` is the vector at the boundary end of the product, ``w`` the vector it
    acts on.
    """

    E_top: np.ndarray
    E_bot: np.ndarray
    rhs: np.ndarray


def xx_closure(eta: complex) -> BoundaryClosure:
    """(1, G_0) = T0 T^{L-1} (G_{L-1}, eta G_0) with unknowns z = (G_{L-1}, G_0)."""
    return BoundaryClosure(
        E_top=np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128),
        E_bot=np.array([[1.0, 0.0], [0.0, eta]], dtype=np.complex128),
        rhs=np.array([1.0, 0.0], dtype=np.complex128),
    )


@dataclass(frozen=True, eq=False)
class TransferSolution:
    s: complex
    components: np.ndarray
    log_scale: float

    @property
    def g00(self) -> complex:
        return complex(self.components[-1])


MatrixBuilder = Callable[[complex], np.ndarray]


def resolvent_first_column_generic(
    T0: MatrixBuilder,
    Tbulk: MatrixBuilder,
    L: int,
    s: complex,
    *,
    closure: BoundaryClosure | None = None,
    period: int = _RESCALE_PERIOD,
) -> TransferSolution:
    """Solve the boundary relation of T0 Tbulk^{L-1} for the resolvent unknowns.

    The product is carried as a graph subspace [X; Y] (X = product applied to
    Y) and re-orthonormalised by QR every ``period`` steps, so L can be large.
    Without an explicit closure only r = 2 (the XX chain with eta = 1) is
    accepted.
    """
    s = complex(s)
    B0 = np.asarray(T0(s), dtype=np.complex128)
    B = np.asarray(Tbulk(s), dtype=np.complex128)
    r = B.shape[0]
    if B.shape != (r, r) or B0.shape != (r, r):
        raise ModelError("transfer builders must return square matrices of equal size")
    if closure is None:
        if r != 2:
            raise ModelError(
                f"no default boundary closure for r={r}; pass one explicitly"
            )
        closure = xx_closure(1.0)
    X = np.eye(r, dtype=np.complex128)
    Y = np.eye(r, dtype=np.complex128)
    log_scale = 0.0
    for step in range(1, L):
        X = B @ X
        if step % period == 0:
            Q, R = np.linalg.qr(np.vstack([X, Y]))
            X, Y = Q[:r], Q[r:]
            log_scale += float(np.log(np.max(np.abs(R))))
    X = B0 @ X
    system = np.block([[X, -closure.E_top], [Y, -closure.E_bot]])
    rhs = np.concatenate([closure.rhs, np.zeros(r, dtype=np.complex128)])
    if not np.all(np.isfinite(system)) or np.linalg.cond(system) > 1e14:
        raise SingularRelationError(f"boundary relation is singular at s={s}")
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularRelationError(f"boundary relation is singular at s={s}") from exc
    return TransferSolution(s=s, components=solution[r:], log_scale=log_scale)


def xx_builders(
    q: float, p: ChainParams
) -> tuple[MatrixBuilder, MatrixBuilder, BoundaryClosure]:
    """Builders and closure reproducing g00_finite through the generic engine."""

    def boundary(s: complex) -> np.ndarray:
        return transfer_pair(s, q, p).T0

    def bulk(s: complex) -> np.ndarray:
        return transfer_pair(s, q, p).T

    return boundary, bulk, xx_closure(corner_phase(q, p.L))


def nonlocal_bulk_transfer(s: complex, q: float, gamma: float, J: float) -> np.ndarray:
    """4x4 bulk transfer matrix of the three-site (nonlocal) dephasing model."""
    if not gamma > 0:
        raise ModelError("nonlocal bulk transfer needs gamma > 0")
    e1 = np.exp(1j * q)
    e2 = np.exp(2j * q)
    denom = e2 + 1.0
    if abs(denom) < _DEGENERATE_TOL:
        raise SingularInputError(f"q={q} makes exp(2iq) + 1 vanish")
    a1 = (2j * J / gamma) * (1.0 - e1) / denom
    a2 = (2.0 * gamma - s) / (gamma * denom)
    a3 = (2j * J / gamma) * (1.0 - 1.0 / e1) / denom
    a4 = (1.0 / e2 - 1.0) / denom
    T = np.zeros((4, 4), dtype=np.complex128)
    T[0] = [a1, a2, a3, a4]
    T[1, 0] = T[2, 1] = T[3, 2] = 1.0
    return T


def nonlocal_spectral_radius(
    s: complex, q_values: ArrayLike, gamma: float, J: float
) -> np.ndarray:
    """Spectral radius of the nonlocal bulk matrix over a q-grid."""
    return np.array(
        [
            np.max(np.abs(np.linalg.eigvals(nonlocal_bulk_transfer(s, q, gamma, J))))
            for q in np.ravel(q_values)
        ]
    )
