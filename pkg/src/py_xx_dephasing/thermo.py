"""Thermodynamic-limit kernels, profiles and their asymptotic forms."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from numpy.polynomial import hermite
from numpy.typing import ArrayLike

from .laplace import TalbotConfig
from .model import (
    ChainParams,
    DiagonalInitialState,
    ModelError,
    NumericalError,
    dispersion,
    mode_arrays,
)
from .propagate import (
    contour_modes,
    diagonal_from_modes,
    invert_modes,
    offdiagonal_from_modes,
)
from .utils.bessel import bessel_j_orders
from .utils.numerics import branch_sqrt, is_mp, lift

logger = logging.getLogger(__name__)

KernelKind = Literal["exact", "telegrapher", "ballistic_offdiag", "diffusive_offdiag"]
DensityMethod = Literal["talbot", "contour"]

DEFAULT_NQ = 2048
_POLE_TOL = 1e-14


class KernelPoleError(NumericalError):
    """Raised when a kernel is evaluated on one of its poles."""


def f_thermo(s: Any, q: ArrayLike, p: ChainParams) -> Any:
    """1/(sqrt(s~^2 + omega^2) - 4 gamma) with s~ = s + 4 gamma."""
    a = lift(4.0 * p.gamma, s)
    return 1 / (branch_sqrt(s + a, dispersion(q, p.J)) - a)


def f_telegrapher(s: Any, q: ArrayLike, p: ChainParams) -> Any:
    """(s + 4 gamma)/(s^2 + 4 gamma s + 8 J^2 q^2), q folded into [-pi, pi)."""
    q_fold = np.mod(np.asarray(q, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    wave = 8.0 * p.J**2 * q_fold**2
    a = 4.0 * p.gamma
    if is_mp(s):
        wave, a = lift(float(wave), s), lift(a, s)
    denom = s * s + a * s + wave
    if np.ndim(denom) == 0:
        if abs(complex(denom)) < _POLE_TOL:
            raise KernelPoleError(f"telegrapher kernel has a pole at s={complex(s)}")
    elif np.any(denom == 0):
        raise KernelPoleError("telegrapher kernel evaluated on a pole")
    return (s + a) / denom


def gl0_thermo(s: Any, q: ArrayLike, l: int, p: ChainParams) -> Any:
    """(i omega)^l / ((R - 4 gamma)(s~ + R)^l) with R = sqrt(s~^2 + omega^2)."""
    if l < 0:
        raise ModelError(f"off-diagonal order must be >= 0, got {l}")
    omega = dispersion(q, p.J)
    a = lift(4.0 * p.gamma, s)
    s_t = s + a
    R = branch_sqrt(s_t, omega)
    if l == 0:
        return 1 / (R - a)
    return (1j * omega) ** l / ((R - a) * (s_t + R) ** l)


def _ballistic(s: Any, q: ArrayLike, l: int, p: ChainParams) -> Any:
    omega = dispersion(q, p.J)
    s_t = s + lift(4.0 * p.gamma, s)
    R = branch_sqrt(s_t, omega)
    return (1j * omega) ** l / (R * (s_t + R) ** l)


def _diffusive(s: Any, q: ArrayLike, l: int, p: ChainParams) -> Any:
    omega = dispersion(q, p.J)
    rate = omega**2 / (8.0 * p.gamma)
    if is_mp(s):
        rate = lift(float(rate), s)
    return (1j * omega / (8.0 * p.gamma)) ** l / (s + rate)


@dataclass(frozen=True)
class ThermoKernel:
    """Laplace kernel of g_l(t, q)/c(q) in the thermodynamic limit.

    ``ballistic_offdiag`` drops the 4 gamma of the exact denominator;
    ``diffusive_offdiag`` keeps the leading small-q, small-s behaviour.
    """

    kind: KernelKind
    p: ChainParams
    l: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (
            "exact",
            "telegrapher",
            "ballistic_offdiag",
            "diffusive_offdiag",
        ):
            raise ModelError(f"unknown kernel kind {self.kind!r}")
        if self.l < 0:
            raise ModelError(f"off-diagonal order must be >= 0, got {self.l}")
        if self.kind == "telegrapher" and self.l:
            raise ModelError("the telegrapher kernel only describes the density")
        if self.kind == "diffusive_offdiag" and self.p.gamma <= 0:
            raise ModelError("the diffusive kernel needs gamma > 0")

    def __call__(self, s: Any, q: ArrayLike) -> Any:
        if self.kind == "exact":
            return gl0_thermo(s, q, self.l, self.p)
        if self.kind == "telegrapher":
            return f_telegrapher(s, q, self.p)
        if self.kind == "ballistic_offdiag":
            return _ballistic(s, q, self.l, self.p)
        return _diffusive(s, q, self.l, self.p)

    @property
    def omega_max(self) -> float:
        """Largest oscillation frequency of the inverse; sets Talbot nodes."""
        if self.kind == "diffusive_offdiag":
            return 0.0
        if self.kind == "telegrapher":
            return math.sqrt(8.0) * self.p.J * math.pi
        return 8.0 * self.p.J


def thermo_kernel(kind: KernelKind, p: ChainParams, l: int = 0) -> ThermoKernel:
    return ThermoKernel(kind=kind, p=p, l=l)


def _grid(
    init: DiagonalInitialState | None, p: ChainParams, nq: int | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Momentum grid, dispersion and c(q): the state's own or a delta at x=0."""
    if init is not None:
        _, q, omega = mode_arrays(init.L, p.J)
        return q, omega, np.asarray(init.cq)
    N = nq or max(p.L, DEFAULT_NQ)
    _, q, omega = mode_arrays(N, p.J)
    return q, omega, np.ones(N, dtype=np.complex128)


def _initial_band(
    init: DiagonalInitialState | None, N: int, l: int
) -> np.ndarray:
    band = np.zeros(N, dtype=np.complex128)
    if l == 0:
        if init is None:
            band[0] = 1.0
        else:
            band[:] = init.c
    return band


def _pick(profile: np.ndarray, x: ArrayLike) -> Any:
    idx = np.mod(np.asarray(x, dtype=np.int64), profile.size)
    picked = profile[idx]
    return picked[()] if np.ndim(picked) == 0 else picked


def _kernel_profile(
    kernel: ThermoKernel,
    t: float,
    init: DiagonalInitialState | None,
    p: ChainParams,
    nq: int | None,
    cfg: TalbotConfig | None,
    workers: int | None,
) -> np.ndarray:
    q, _, cq = _grid(init, p, nq)
    if t == 0:
        return _initial_band(init, q.size, kernel.l)
    values = invert_modes(
        kernel,
        t,
        q,
        cfg,
        order=kernel.l,
        omega_max=kernel.omega_max,
        workers=workers,
    )
    return offdiagonal_from_modes(values, cq, kernel.l)


def density_profile(
    t: float,
    init: DiagonalInitialState | None,
    p: ChainParams,
    method: DensityMethod = "talbot",
    *,
    nq: int | None = None,
    cfg: TalbotConfig | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """C_{x,x}(t) on every site of the grid (x = 0..N-1, periodic).

    Without ``init`` the release is a delta at x = 0 on N_q = max(L, 2048)
    momenta, which approximates the q integral by the trapezoid rule.
    """
    if t < 0:
        raise ModelError(f"t must be >= 0, got {t}")
    if method not in ("talbot", "contour"):
        raise ModelError(f"unknown density method {method!r}")
    if method == "talbot" or t == 0:
        return _kernel_profile(
            thermo_kernel("exact", p), t, init, p, nq, cfg, workers
        ).real
    _, omega, cq = _grid(init, p, nq)
    values = contour_modes(t, omega, p.gamma, workers=workers, talbot=cfg)
    return diagonal_from_modes(values, cq)


def density_thermo(
    x: ArrayLike,
    t: float,
    init: DiagonalInitialState | None,
    p: ChainParams,
    method: DensityMethod = "talbot",
    *,
    nq: int | None = None,
    cfg: TalbotConfig | None = None,
    workers: int | None = None,
) -> Any:
    """C_{x,x}(t) from the thermodynamic kernel at the requested site(s)."""
    profile = density_profile(t, init, p, method, nq=nq, cfg=cfg, workers=workers)
    return _pick(profile, x)


def density_shorttime(x: ArrayLike, t: float, p: ChainParams) -> Any:
    """[J_x(4 J t)]^2 e^{-4 gamma t} for a delta release at x = 0."""
    if t < 0:
        raise ModelError(f"t must be >= 0, got {t}")
    values = bessel_j_orders(x, 4.0 * p.J * t) ** 2 * math.exp(-4.0 * p.gamma * t)
    return values[()] if np.ndim(values) == 0 else values


def density_longtime(x: ArrayLike, t: float, p: ChainParams) -> Any:
    """Gaussian e^{-x^2/(4 D t)}/sqrt(4 pi D t) with D = 2 J^2 / gamma."""
    if p.gamma <= 0:
        raise ModelError("the diffusive limit needs gamma > 0")
    if t <= 0:
        raise ModelError(f"the diffusive limit needs t > 0, got {t}")
    width = 4.0 * p.diffusion_constant * t
    x_arr = np.asarray(x, dtype=np.float64)
    values = np.exp(-(x_arr**2) / width) / math.sqrt(math.pi * width)
    return values[()] if values.ndim == 0 else values


def variance_delta(t: ArrayLike, p: ChainParams) -> Any:
    """Exact spatial variance after a delta release.

    sigma^2(t) = 2Dt - (J/gamma)^2 (1 - e^{-4 gamma t}).
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if p.gamma <= 0:
        values = 8.0 * p.J**2 * t_arr**2
    else:
        values = 2.0 * p.diffusion_constant * t_arr - (p.J / p.gamma) ** 2 * (
            1.0 - np.exp(-4.0 * p.gamma * t_arr)
        )
    return values[()] if values.ndim == 0 else values


def offdiag_thermo(
    x: ArrayLike,
    l: int,
    t: float,
    init: DiagonalInitialState | None,
    p: ChainParams,
    *,
    nq: int | None = None,
    cfg: TalbotConfig | None = None,
    workers: int | None = None,
) -> Any:
    """C_{x+l,x}(t) from the exact thermodynamic kernel."""
    kernel = thermo_kernel("exact", p, l)
    return _pick(_kernel_profile(kernel, t, init, p, nq, cfg, workers), x)


def offdiag_ballistic(
    x: ArrayLike,
    l: int,
    t: float,
    p: ChainParams,
    init: DiagonalInitialState | None = None,
    *,
    nq: int | None = None,
    cfg: TalbotConfig | None = None,
    workers: int | None = None,
) -> Any:
    """Short-time C_{x+l,x}(t): the exact kernel without 4 gamma in its denominator."""
    kernel = thermo_kernel("ballistic_offdiag", p, l)
    return _pick(_kernel_profile(kernel, t, init, p, nq, cfg, workers), x)


def offdiag_diffusive(
    x: ArrayLike,
    l: int,
    t: float,
    p: ChainParams,
    init: DiagonalInitialState | None = None,
    *,
    nq: int | None = None,
    cfg: TalbotConfig | None = None,
    workers: int | None = None,
) -> Any:
    """Long-time C_{x+l,x}(t) from the diffusive kernel, inverted numerically."""
    kernel = thermo_kernel("diffusive_offdiag", p, l)
    return _pick(_kernel_profile(kernel, t, init, p, nq, cfg, workers), x)


def offdiag_longtime(x: ArrayLike, l: int, t: float, p: ChainParams) -> Any:
    """(iJ/(2 gamma))^l d^l/dm^l G(m) at m = x + l/2, G the diffusion Gaussian.

    The l-th derivative is (-1/sqrt(4 D t))^l H_l(m/sqrt(4 D t)) G(m) with the
    physicists' Hermite polynomial H_l.
    """
    if l < 0:
        raise ModelError(f"off-diagonal order must be >= 0, got {l}")
    m = np.asarray(x, dtype=np.float64) + 0.5 * l
    gauss = np.asarray(density_longtime(m, t, p))
    scale = math.sqrt(4.0 * p.diffusion_constant * t)
    coeffs = np.zeros(l + 1)
    coeffs[l] = 1.0
    derivative = (-1.0 / scale) ** l * hermite.hermval(m / scale, coeffs) * gauss
    values = (0.5j * p.J / p.gamma) ** l * derivative
    return values[()] if np.ndim(values) == 0 else values
