"""Magnetization, currents, transport exponents and fits."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from numpy.typing import ArrayLike
from scipy.signal import savgol_filter

from .model import STRUCTURE_TOL, CorrelationMatrix, ModelError, NumericalError

logger = logging.getLogger(__name__)

FitMethod = Literal["delta", "wall"]
DecaySite = Literal["center", "max"]

MIN_FIT_POINTS = 5
R2_WARN = 0.99


class StructureViolationError(NumericalError):
    """Raised when C breaks the real-even / imaginary-odd diagonal structure."""


class FitError(ModelError):
    """Raised when a fit window holds too few usable points."""


@dataclass(frozen=True, eq=False)
class TransportSeries:
    """M(t) of a domain-wall melt and, once computed, beta = dlog M / dlog t."""

    times: np.ndarray
    M: np.ndarray
    beta: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        M = np.asarray(self.M, dtype=np.float64)
        if times.ndim != 1 or M.shape != times.shape:
            raise ModelError("times and M must be 1-D arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise ModelError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "M", M)
        if self.beta is not None:
            beta = np.asarray(self.beta, dtype=np.float64)
            if beta.shape != times.shape:
                raise ModelError("beta must have one value per time")
            object.__setattr__(self, "beta", beta)

    def to_frame(self) -> pd.DataFrame:
        beta = self.beta if self.beta is not None else np.full(self.times.shape, np.nan)
        return pd.DataFrame({"t": self.times, "M": self.M, "beta": beta})

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def to_json(self) -> str:
        frame = self.to_frame()
        payload = {
            "meta": self.meta,
            "t": frame["t"].tolist(),
            "M": frame["M"].tolist(),
            "beta": [None if np.isnan(b) else float(b) for b in frame["beta"]],
        }
        return json.dumps(payload)


@dataclass(frozen=True)
class DiffusionFit:
    """OLS fit sigma^2(t) = intercept + 2 D t over ``n_points`` profiles."""

    D: float
    r_squared: float
    intercept: float
    n_points: int


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    prefactor: float
    n_points: int


def magnetization_profile(C: CorrelationMatrix) -> np.ndarray:
    """<sigma_z^x> = -C_{x,x}."""
    diag = C.entries.diagonal()
    worst = float(np.max(np.abs(diag.imag)))
    if worst > STRUCTURE_TOL:
        raise StructureViolationError(
            f"diagonal of C has imaginary part {worst:.3g} at t={C.time:.6g}"
        )
    return -diag.real.copy()


def current_profile(C: CorrelationMatrix, J: float) -> np.ndarray:
    """j_x = 4 J Im C_{x+1,x} on the bond x -> x+1 (periodic)."""
    bond = C.diagonal(1)
    if C.L % 2 == 0:
        worst = float(np.max(np.abs(bond.real)))
        if worst > STRUCTURE_TOL:
            raise StructureViolationError(
                f"first off-diagonal of C has real part {worst:.3g} at t={C.time:.6g}"
            )
    return 4.0 * J * bond.imag


def transferred_magnetization(m: ArrayLike, L: int) -> float:
    """Sum of <sigma_z^x> over the right half x >= L // 2, plus L/2.

    L // 2 equals ceil((L-1)/2) for every L, so on an odd ring the middle
    site (L - 1)/2 is included.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (L,):
        raise ModelError(f"profile must have {L} sites, got shape {m.shape}")
    start = L // 2
    return float(np.sum(m[start:]) + 0.5 * L)


def transport_series(
    times: ArrayLike,
    profiles: Iterable[ArrayLike],
    meta: Mapping[str, Any] | None = None,
) -> TransportSeries:
    """TransportSeries from magnetization profiles at increasing times."""
    M = [transferred_magnetization(m, len(m)) for m in map(np.asarray, profiles)]
    return TransportSeries(np.asarray(times), np.asarray(M), meta=dict(meta or {}))


def log_derivative(
    series: TransportSeries,
    *,
    smooth: bool = False,
    window: int = 7,
    polyorder: int = 2,
) -> TransportSeries:
    """beta(t) = d log M / d log t by second-order finite differences.

    Points with M <= 0 are skipped and keep beta = NaN. ``smooth`` replaces the
    differences by a Savitzky-Golay derivative, which needs log-uniform times.
    """
    beta = np.full(series.times.shape, np.nan)
    valid = (series.M > 0) & (series.times > 0)
    skipped = int(np.sum(~valid))
    if skipped:
        logger.debug("log_derivative skips %d points with M <= 0", skipped)
    if np.sum(valid) >= 2:
        log_t = np.log(series.times[valid])
        log_M = np.log(series.M[valid])
        if smooth:
            steps = np.diff(log_t)
            if not np.allclose(steps, steps[0], rtol=1e-6):
                raise ModelError("smoothed beta needs log-uniform times")
            window = min(window, log_t.size - (1 - log_t.size % 2))
            if window <= polyorder:
                raise ModelError("too few points for the smoothing window")
            beta[valid] = savgol_filter(
                log_M, window, polyorder, deriv=1, delta=float(steps[0])
            )
        else:
            beta[valid] = np.gradient(log_M, log_t)
    meta = dict(series.meta, beta_smoothing="savgol" if smooth else "none")
    return TransportSeries(series.times, series.M, beta, meta)


def _centred_positions(N: int, centre: float) -> np.ndarray:
    return np.mod(np.arange(N) - centre + N / 2, N) - N / 2


def _spread(weights: np.ndarray, positions: np.ndarray) -> float:
    total = np.sum(weights)
    if not total > 0:
        raise FitError("profile carries no weight")
    mean = np.sum(positions * weights) / total
    return float(np.sum((positions - mean) ** 2 * weights) / total)


def profile_variance(m: ArrayLike, method: FitMethod = "delta", site: int = 0) -> float:
    """Spatial variance of a delta release (weights -m) or of a wall's slope.

    For the wall the weights are (m_x - m_{x+1})/2 on bonds x + 1/2 of the
    central half of the ring, around the wall between L/2 - 1 and L/2.
    """
    m = np.asarray(m, dtype=np.float64)
    N = m.size
    if method == "delta":
        return _spread(-m, _centred_positions(N, site))
    if method == "wall":
        slope = 0.5 * (m - np.roll(m, -1))
        bonds = np.arange(N) + 0.5
        central = (bonds > N / 4) & (bonds < 3 * N / 4)
        return _spread(slope[central], bonds[central] - N / 2)
    raise ModelError(f"unknown variance method {method!r}")


def fit_diffusion(
    profiles: Sequence[tuple[float, ArrayLike]],
    method: FitMethod = "delta",
    *,
    site: int = 0,
) -> DiffusionFit:
    """D from an OLS fit sigma^2(t) = a + 2 D t."""
    if len(profiles) < 2:
        raise FitError("a diffusion fit needs at least two profiles")
    times = np.array([t for t, _ in profiles], dtype=np.float64)
    variances = np.array([profile_variance(m, method, site) for _, m in profiles])
    fit = sm.OLS(variances, sm.add_constant(times)).fit()
    result = DiffusionFit(
        D=float(fit.params[1]) / 2.0,
        r_squared=float(fit.rsquared),
        intercept=float(fit.params[0]),
        n_points=times.size,
    )
    if result.r_squared < R2_WARN:
        logger.warning(
            "Poor diffusion fit: R^2=%.4f over %d profiles (D=%.6g)",
            result.r_squared,
            result.n_points,
            result.D,
        )
    return result


def fit_powerlaw(t: ArrayLike, y: ArrayLike) -> PowerLawFit:
    """Least-squares slope of log y against log t, with its standard error."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape:
        raise FitError("t and y must have the same shape")
    if t.size < MIN_FIT_POINTS:
        raise FitError(f"power-law fit needs >= {MIN_FIT_POINTS} points, got {t.size}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise FitError("power-law fit needs t > 0 and y > 0 on the window")
    fit = sm.OLS(np.log(y), sm.add_constant(np.log(t))).fit()
    return PowerLawFit(
        exponent=float(fit.params[1]),
        stderr=float(fit.bse[1]),
        prefactor=float(np.exp(fit.params[0])),
        n_points=t.size,
    )


def band_decay(
    bands: Iterable[ArrayLike],
    l: int,
    site: DecaySite = "center",
    *,
    release: int = 0,
) -> np.ndarray:
    """|C_{x+l,x}| per band at x = release - floor(l/2), or the max over x.

    The centre site decays as t^-(ceil(l/2) + 1/2). For odd l the maximum
    over x sits off centre and decays half a power of t slower.
    """
    if site not in ("center", "max"):
        raise ModelError(f"unknown decay site {site!r}")
    values = []
    for band in bands:
        magnitude = np.abs(np.asarray(band))
        if site == "center":
            values.append(magnitude[(release - l // 2) % magnitude.size])
        else:
            values.append(np.max(magnitude))
    return np.asarray(values, dtype=np.float64)


def offdiag_decay(
    states: Sequence[CorrelationMatrix],
    l: int,
    site: DecaySite = "center",
    *,
    release: int = 0,
) -> np.ndarray:
    """Decay of the l-th diagonal over a trajectory; see :func:`band_decay`."""
    return band_decay((C.diagonal(l) for C in states), l, site, release=release)


def continuity_residual(
    m_prev: ArrayLike, m_next: ArrayLike, j: ArrayLike, dt: float
) -> float:
    """max_x |(m_next - m_prev)/dt + j_x - j_{x-1}| with j at the midpoint."""
    if dt <= 0:
        raise ModelError("dt must be positive")
    dm = (np.asarray(m_next) - np.asarray(m_prev)) / dt
    j = np.asarray(j, dtype=np.float64)
    return float(np.max(np.abs(dm + j - np.roll(j, 1))))


def trajectory_frame(
    states: Iterable[CorrelationMatrix], J: float
) -> pd.DataFrame:
    """Long table t, x, m, j over a sequence of correlation matrices."""
    frames = []
    for C in states:
        frames.append(
            pd.DataFrame(
                {
                    "t": np.full(C.L, C.time),
                    "x": np.arange(C.L),
                    "m": magnetization_profile(C),
                    "j": current_profile(C, J),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=["t", "x", "m", "j"])
    return pd.concat(frames, ignore_index=True)
