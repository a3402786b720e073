"""Inverse Laplace transforms of the dephasing kernels.

Two independent routes:

* fixed Talbot, either through ``mpmath.invertlaplace`` (one multiprecision
  inversion per call) or a float64 node/weight rule that inverts many kernels
  at once;
* contour inversion of 1/(sqrt(s^2 + omega^2) - 4 gamma): residue of the
  physical-sheet pole plus a branch-cut integral over [-i omega, i omega],
  which is a principal-value integral when the poles sit on the cut.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, Literal

import mpmath
import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate

from .model import ChainParams, ModelError, NumericalError, dispersion
from .utils.numerics import branch_sqrt

logger = logging.getLogger(__name__)

PrecisionMode = Literal["fixed", "richardson"]
TalbotBackend = Literal["auto", "mpmath", "vector"]
ContourRegime = Literal["real_poles", "imaginary_poles", "marginal"]
LaplaceKernel = Callable[[Any], Any]

_MARGINAL_TOL = 1e-8
_QUAD_TOL = 1e-9
_GL_MIN_NODES = 64
_GL_MAX_NODES = 2**15
_GL_CHUNK = 2**22
_PV_GUARD = 1e-6
_NEGLIGIBLE = 1e-15

# mpmath precision is global state
_MP_LOCK = threading.Lock()


class ContourCollisionError(NumericalError):
    """Raised when a kernel is singular or non-finite on the Talbot contour."""


class MarginalRegimeError(NumericalError):
    """Raised when 4 gamma = omega and the contour formulas degenerate."""


class QuadratureError(NumericalError):
    """Raised when adaptive quadrature misses its tolerance."""


@dataclass(frozen=True)
class TalbotConfig:
    """Fixed-Talbot settings.

    ``backend="auto"`` means mpmath for scalar inversions; the mode pipelines
    switch to the float64 rule when ``vector_nodes`` suffice.
    """

    M: int = 64
    shift: float = 0.0
    precision_mode: PrecisionMode = "fixed"
    backend: TalbotBackend = "auto"
    vector_nodes: int = 32
    tolerance: float = 1e-6

    def __post_init__(self) -> None:
        if self.M < 8 or self.M % 2:
            raise ModelError(f"Talbot M must be even and >= 8, got {self.M}")
        if self.vector_nodes < 8 or self.vector_nodes % 2:
            raise ModelError("vector_nodes must be even and >= 8")
        if self.precision_mode not in ("fixed", "richardson"):
            raise ModelError(f"unknown precision mode {self.precision_mode!r}")
        if self.backend not in ("auto", "mpmath", "vector"):
            raise ModelError(f"unknown Talbot backend {self.backend!r}")


@dataclass(frozen=True)
class TalbotEstimate:
    value: complex
    error: float


@dataclass(frozen=True)
class ContourPieces:
    pole_term: complex
    branchcut_term: float
    regime: ContourRegime

    @property
    def total(self) -> complex:
        return self.pole_term + self.branchcut_term


def required_nodes(omega_t: float, base: int = 0) -> int:
    """Talbot node count whose contour encloses oscillations up to omega*t."""
    nodes = math.ceil(2.0 * omega_t) + 24
    nodes += nodes % 2
    return max(base, nodes)


def _mp_invert(F: LaplaceKernel, t: float, M: int, real_valued: bool) -> complex:
    def part(kernel: LaplaceKernel) -> Any:
        return mpmath.invertlaplace(kernel, t, method="talbot", degree=M)

    if real_valued:
        return complex(part(F))

    # mpmath returns the real part only; split F into the transforms of
    # Re f and Im f.
    def real_part(s: Any) -> Any:
        return (F(s) + mpmath.conj(F(mpmath.conj(s)))) / 2

    def imag_part(s: Any) -> Any:
        return (F(s) - mpmath.conj(F(mpmath.conj(s)))) / 2j

    return complex(part(real_part)) + 1j * complex(part(imag_part))


def _talbot_mp(
    F: LaplaceKernel, t: float, M: int, shift: float, real_valued: bool
) -> complex:
    kernel = F
    if shift:
        sigma = mpmath.mpf(shift)

        def kernel(s: Any) -> Any:
            return F(s + sigma)

    try:
        with _MP_LOCK:
            value = _mp_invert(kernel, t, M, real_valued)
    except ZeroDivisionError as exc:
        raise ContourCollisionError(
            f"kernel singular on the Talbot contour at t={t}"
        ) from exc
    if not np.isfinite(value):
        raise ContourCollisionError(f"non-finite Talbot result at t={t}")
    return value * math.exp(shift * t)


def talbot_nodes(
    t: float, M: int, shift: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes s_k and weights w_k with f(t) ~ sum_k w_k F(s_k).

    Contour s = shift + (r/t) theta (cot theta + i) with r = 2M/5; trapezoid
    rule on theta_k = k pi / M for |k| < M.
    """
    if t <= 0:
        raise ModelError(f"Talbot inversion needs t > 0, got {t}")
    rho = 0.4 * M
    theta = np.pi * np.arange(-(M - 1), M) / M
    centre = theta == 0
    safe = np.where(centre, 1.0, theta)
    cot = np.where(centre, 0.0, 1.0 / np.tan(safe))
    delta = np.where(centre, rho + 0j, rho * theta * (cot + 1j))
    sigma = np.where(centre, 0.0, theta + (theta * cot - 1.0) * cot)
    nodes = shift + delta / t
    weights = (rho / (2.0 * M * t)) * np.exp(delta + shift * t) * (1.0 + 1j * sigma)
    return nodes, weights


def talbot_invert_batch(
    values: Callable[[np.ndarray], np.ndarray],
    t: float,
    M: int,
    *,
    shift: float = 0.0,
) -> np.ndarray:
    """Invert many kernels at once.

    ``values`` maps nodes of shape (K, 1) to an array of shape (K, ...).
    """
    nodes, weights = talbot_nodes(t, M, shift)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        F = np.asarray(values(nodes[:, None]), dtype=np.complex128)
    if not np.all(np.isfinite(F)):
        raise ContourCollisionError(
            f"non-finite kernel values on the Talbot contour at t={t}"
        )
    return np.tensordot(weights, F, axes=(0, 0))


def _talbot_once(
    F: LaplaceKernel, t: float, M: int, cfg: TalbotConfig, real_valued: bool
) -> complex:
    if cfg.backend == "vector":
        value = complex(
            talbot_invert_batch(lambda s: F(s[:, 0]), t, M, shift=cfg.shift)
        )
    else:
        value = _talbot_mp(F, t, M, cfg.shift, real_valued)
    return complex(value.real) if real_valued else value


def talbot_estimate(
    F: LaplaceKernel,
    t: float,
    cfg: TalbotConfig | None = None,
    *,
    real_valued: bool = False,
) -> TalbotEstimate:
    """Inversion with the coarse-vs-fine rule difference as error estimate.

    The fine rule doubles M on the mpmath backend; the float64 rule only adds
    a quarter since its round-off grows like exp(2M/5).
    """
    cfg = cfg or TalbotConfig()
    if t <= 0:
        raise ModelError(f"Talbot inversion needs t > 0, got {t}")
    coarse = _talbot_once(F, t, cfg.M, cfg, real_valued)
    fine_M = cfg.M + max(8, cfg.M // 4) if cfg.backend == "vector" else 2 * cfg.M
    fine_M += fine_M % 2
    fine = _talbot_once(F, t, fine_M, cfg, real_valued)
    error = abs(fine - coarse)
    if error > cfg.tolerance * max(1.0, abs(fine)):
        logger.warning(
            "Talbot estimate at t=%.6g differs by %.3g between M=%d and M=%d",
            t,
            error,
            cfg.M,
            fine_M,
        )
    return TalbotEstimate(value=fine, error=error)


def talbot_invert(
    F: LaplaceKernel,
    t: float,
    cfg: TalbotConfig | None = None,
    *,
    real_valued: bool = False,
) -> complex:
    """(1/2 pi i) integral of e^{st} F(s) along the fixed Talbot contour.

    ``F`` must accept mpmath scalars (mpmath backend) or numpy arrays (vector
    backend). In ``richardson`` mode the finer rule's value is returned and a
    warning is logged when the two rules disagree.
    """
    cfg = cfg or TalbotConfig()
    if t <= 0:
        raise ModelError(f"Talbot inversion needs t > 0, got {t}")
    if cfg.precision_mode == "richardson":
        return talbot_estimate(F, t, cfg, real_valued=real_valued).value
    return _talbot_once(F, t, cfg.M, cfg, real_valued)


def _quad(
    f: Callable[[float], float], lo: float, hi: float, limit: int = 400
) -> tuple[float, float, dict]:
    value, abserr, info, *message = integrate.quad(
        f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=limit, full_output=1
    )
    if message:
        logger.debug("quad on [%.6g, %.6g]: %s", lo, hi, message[0])
    return value, abserr, info


def pv_quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    c: float,
    *,
    residue: float | None = None,
    tol: float = _QUAD_TOL,
    limit: int = 400,
) -> float:
    """PV integral of f over [a, b] with a simple pole at c.

    f - R/(s - c) is integrated with adaptive Gauss-Kronrod on both sides and
    R log((b - c)/(c - a)) is added back. R is estimated numerically unless
    given.
    """
    if not a < c < b:
        raise ModelError(f"singular point {c} must lie strictly inside ({a}, {b})")
    if residue is None:
        h = 1e-6 * (b - a)
        residue = 0.5 * h * (f(c + h) - f(c - h))
    R = residue

    def regular(s: float) -> float:
        return f(s) - R / (s - c)

    total = R * math.log((b - c) / (c - a))
    for lo, hi in ((a, c), (c, b)):
        value, abserr, info = _quad(regular, lo, hi, limit)
        if abserr > tol * max(1.0, abs(value)):
            raise QuadratureError(
                f"PV panel [{lo:.6g}, {hi:.6g}] around c={c:.6g} reached error "
                f"{abserr:.3g} (tol {tol:.1g}) after {info['neval']} evaluations"
            )
        total += value
    return total


def classify_regime(omega: float, gamma: float) -> ContourRegime:
    a = 4.0 * gamma
    if abs(a - omega) < _MARGINAL_TOL:
        return "marginal"
    return "real_poles" if a > omega else "imaginary_poles"


def _checked_quad(
    f: Callable[[float], float], omega: float, gamma: float, t: float
) -> float:
    value, abserr, info = _quad(f, 0.0, 0.5 * np.pi)
    if abserr > _QUAD_TOL * max(1.0, abs(value)):
        raise QuadratureError(
            f"branch-cut quadrature at omega={omega:.6g}, gamma={gamma:.6g}, "
            f"t={t:.6g} reached error {abserr:.3g} after {info['neval']} evaluations"
        )
    return value


def contour_pieces(
    t: float, omega: float, gamma: float, *, damped: bool = False
) -> ContourPieces:
    """Pole and branch-cut parts of L^-1[1/(sqrt(s^2 + omega^2) - 4 gamma)](t).

    With s = omega cos(theta) on the cut the branch part reads
    (2/pi) int_0^{pi/2} cos(omega t cos th) omega^2 sin^2 th
    / (omega^2 - 16 gamma^2 - omega^2 cos^2 th) dth.
    ``damped`` multiplies both parts by exp(-4 gamma t).
    """
    if t <= 0:
        raise ModelError(f"contour inversion needs t > 0, got {t}")
    a = 4.0 * gamma
    decay = a * t if damped else 0.0
    if omega == 0:
        regime: ContourRegime = "real_poles" if a > 0 else "marginal"
        return ContourPieces(complex(math.exp(a * t - decay)), 0.0, regime)
    regime = classify_regime(omega, gamma)
    if regime == "marginal":
        raise MarginalRegimeError(
            f"4*gamma={a:.12g} meets omega={omega:.12g}; use Talbot instead"
        )
    scale = math.exp(-decay)
    wt = omega * t

    if a == 0:
        branch = _checked_quad(lambda th: math.cos(wt * math.cos(th)), omega, gamma, t)
        return ContourPieces(0j, 2.0 / np.pi * branch * scale, regime)

    if regime == "real_poles":
        kappa = math.sqrt(a * a - omega * omega)

        def smooth(th: float) -> float:
            c = math.cos(th)
            sn = math.sin(th)
            denominator = -(kappa**2) - (omega * c) ** 2
            return math.cos(wt * c) * (omega * sn) ** 2 / denominator

        branch = _checked_quad(smooth, omega, gamma, t)
        pole = (a / kappa) * math.exp(kappa * t - decay)
        return ContourPieces(complex(pole), 2.0 / np.pi * branch * scale, regime)

    b = math.sqrt(omega * omega - a * a)
    theta_b = math.acos(b / omega)

    def singular(th: float) -> float:
        c = math.cos(th)
        sn = math.sin(th)
        # b^2 - omega^2 cos^2 th, factored around its zero at theta_b
        denom = (
            2.0
            * omega
            * math.sin(0.5 * (th + theta_b))
            * math.sin(0.5 * (th - theta_b))
            * (b + omega * c)
        )
        return math.cos(wt * c) * (omega * sn) ** 2 / denom

    residue = 0.5 * math.cos(b * t) * math.tan(theta_b)
    branch = pv_quadrature(singular, 0.0, 0.5 * np.pi, theta_b, residue=residue)
    pole = (a / b) * math.sin(b * t) * scale
    return ContourPieces(complex(pole), 2.0 / np.pi * branch * scale, regime)


def contour_invert(
    t: float, q: float, p: ChainParams, *, damped: bool = False
) -> ContourPieces:
    """Contour inversion of the thermodynamic kernel at momentum q."""
    return contour_pieces(t, dispersion(q, p.J), p.gamma, damped=damped)


def _gl_bucket(n: int) -> int:
    return 1 << max(6, math.ceil(math.log2(n)))


def _branch_batch(
    omega: np.ndarray, gamma: float, t: float, nodes: int, imaginary: bool
) -> np.ndarray:
    """Gauss-Legendre branch-cut integrals (without 2/pi) for one regime."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.25 * np.pi * (x + 1.0)
    weights = 0.25 * np.pi * w
    a = 4.0 * gamma
    om = omega[:, None]
    if not imaginary:
        cos_th = np.cos(theta)[None, :]
        kappa2 = (a * a - omega * omega)[:, None]
        numer = np.cos(om * t * cos_th) * (om * np.sin(theta)[None, :]) ** 2
        return (numer / (-kappa2 - (om * cos_th) ** 2)) @ weights

    b = np.sqrt(omega * omega - a * a)[:, None]
    theta_b = np.arccos(b / om)
    residue = 0.5 * np.cos(b * t) * np.tan(theta_b)

    def remainder(angle: np.ndarray) -> np.ndarray:
        c = np.cos(angle)
        denom = (
            2.0
            * om
            * np.sin(0.5 * (angle + theta_b))
            * np.sin(0.5 * (angle - theta_b))
            * (b + om * c)
        )
        full = np.cos(om * t * c) * (om * np.sin(angle)) ** 2 / denom
        # poles of the integrand at theta_b, -theta_b and pi - theta_b
        poles = (
            1.0 / (angle - theta_b)
            - 1.0 / (angle + theta_b)
            - 1.0 / (angle - np.pi + theta_b)
        )
        return full - residue * poles

    angle = np.broadcast_to(theta[None, :], (omega.size, nodes))
    near = np.abs(angle - theta_b) < _PV_GUARD
    with np.errstate(divide="ignore", invalid="ignore"):
        values = remainder(angle)
        if np.any(near):
            above = remainder(np.broadcast_to(theta_b + _PV_GUARD, angle.shape))
            below = remainder(np.broadcast_to(theta_b - _PV_GUARD, angle.shape))
            values = np.where(near, 0.5 * (above + below), values)
    analytic = residue[:, 0] * np.log(
        (np.pi - theta_b[:, 0]) / (0.5 * np.pi + theta_b[:, 0])
    )
    return values @ weights + analytic


def contour_invert_batch(
    t: float,
    omegas: ArrayLike,
    gamma: float,
    *,
    damped: bool = True,
    talbot: TalbotConfig | None = None,
) -> np.ndarray:
    """Contour inversion for many modes, by default with the exp(-4 gamma t) factor.

    Branch-cut integrals use fixed Gauss-Legendre rules bucketed by node count
    and are dropped once exp(-4 gamma t) makes them negligible. Modes needing
    more than 2^15 nodes fall back to :func:`contour_pieces`, marginal modes
    to Talbot.
    """
    if t <= 0:
        raise ModelError(f"contour inversion needs t > 0, got {t}")
    omega = np.asarray(omegas, dtype=np.float64)
    a = 4.0 * gamma
    decay = a * t if damped else 0.0
    scale = math.exp(-decay)
    out = np.zeros(omega.shape, dtype=np.complex128)

    zero = omega == 0
    marginal = ~zero & (np.abs(a - omega) < _MARGINAL_TOL)
    live = ~zero & ~marginal
    real = live & (a > omega)
    imag = live & (a < omega)
    gap = np.sqrt(np.abs(a * a - omega * omega))
    gap = np.where(gap > 0, gap, 1.0)

    out[zero] = math.exp(a * t - decay)
    kappa = gap[real]
    out[real] = (a / kappa) * np.exp(kappa * t - decay)
    if a > 0:
        b = gap[imag]
        out[imag] = (a / b) * np.sin(b * t) * scale

    bound = 2.0 * (1.0 + omega / gap) * scale
    needs_branch = live & (bound >= _NEGLIGIBLE)
    counts = _GL_MIN_NODES + np.ceil(omega * t) + np.ceil(8.0 * omega / gap)
    oversized = needs_branch & (counts > _GL_MAX_NODES)
    for idx in np.flatnonzero(oversized):
        out[idx] = contour_pieces(t, float(omega[idx]), gamma, damped=damped).total
    batched = needs_branch & ~oversized
    for imaginary, mask in ((False, batched & real), (True, batched & imag)):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        buckets = np.array([_gl_bucket(int(n)) for n in counts[idx]])
        for nodes in np.unique(buckets):
            block = idx[buckets == nodes]
            step = max(1, _GL_CHUNK // int(nodes))
            for start in range(0, block.size, step):
                chunk = block[start : start + step]
                branch = _branch_batch(omega[chunk], gamma, t, int(nodes), imaginary)
                out[chunk] += 2.0 / np.pi * branch * scale
    if np.any(marginal):
        cfg = talbot or TalbotConfig()
        for idx in np.flatnonzero(marginal):
            out[idx] = _marginal_talbot(t, float(omega[idx]), gamma, cfg, damped)
    return out


def _marginal_talbot(
    t: float, omega: float, gamma: float, cfg: TalbotConfig, damped: bool
) -> complex:
    a = 4.0 * gamma

    def kernel(s: Any) -> Any:
        return 1 / (branch_sqrt(s, omega) - a)

    M = required_nodes(omega * t, cfg.M)
    logger.info("Marginal mode omega=%.6g inverted with Talbot (M=%d)", omega, M)
    value = _talbot_mp(kernel, t, M, 0.0, True)
    return value * math.exp(-a * t) if damped else value
