"""Brute-force reference solvers for the correlation-matrix dynamics.

Two independent routes to C(t):

* ``evolve_direct`` integrates dC/dt = -2i[T, C] - 4 gamma (C - diag C) on the
  full L x L matrix of the periodic chain.
* ``evolve_spectral`` / ``evolve_modes`` propagate each momentum mode with the
  reduced generator A(q) acting on g_0..g_{L-1}.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike
from scipy.integrate import solve_ivp

from .model import (
    DENSE_MAX_L,
    ChainParams,
    CorrelationMatrix,
    DiagonalInitialState,
    ModelError,
    NumericalError,
    assemble_correlations,
    corner_phase,
    dispersion,
    unique_mode_indices,
)

logger = logging.getLogger(__name__)

_COND_LIMIT = 1e12


class IntegrationError(NumericalError):
    """Raised when the adaptive integrator cannot meet its tolerance."""

    def __init__(self, message: str, time: float) -> None:
        super().__init__(f"{message} (reached t={time:.6g})")
        self.time = time


@dataclass(frozen=True, eq=False)
class GeneratorA:
    """Reduced generator for one momentum mode: d g / dt = A g."""

    q: float
    L: int
    entries: np.ndarray
    omega: float
    eta: complex


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    times: np.ndarray
    states: list

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or len(self.states) != times.size:
            raise ModelError("one state per time is required")
        if np.any(np.diff(times) <= 0):
            raise ModelError("evolution times must be strictly increasing")
        object.__setattr__(self, "times", times)

    def __iter__(self):
        return iter(zip(self.times, self.states))


def _check_times(times: ArrayLike) -> np.ndarray:
    grid = np.asarray(times, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ModelError("at least one evolution time is required")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ModelError("evolution times must be >= 0 and strictly increasing")
    return grid


def _hopping_rhs(L: int, J: float, gamma: float) -> Callable:
    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        C = y.reshape(L, L)
        TC = J * (np.roll(C, -1, axis=0) + np.roll(C, 1, axis=0))
        CT = J * (np.roll(C, -1, axis=1) + np.roll(C, 1, axis=1))
        dC = -2j * (TC - CT)
        if gamma:
            off = C.copy()
            np.fill_diagonal(off, 0.0)
            dC -= 4.0 * gamma * off
        return dC.ravel()

    return rhs


def evolve_direct(
    C0: CorrelationMatrix,
    p: ChainParams,
    times: ArrayLike,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    dense_max_L: int = DENSE_MAX_L,
) -> EvolutionResult:
    """Integrate the real-space correlation ODE with RK45."""
    if C0.L != p.L:
        raise ModelError(f"C0 has L={C0.L} but parameters say L={p.L}")
    if p.L > dense_max_L:
        raise ModelError(f"direct evolution limited to L <= {dense_max_L}")
    if C0.hermiticity_error() > 1e-10:
        raise ModelError("initial correlation matrix is not Hermitian")
    grid = _check_times(times)
    y0 = C0.entries.ravel().astype(np.complex128)
    if grid[-1] == 0.0:
        return EvolutionResult(grid, [CorrelationMatrix(C0.entries.copy(), 0.0)])
    sol = solve_ivp(
        _hopping_rhs(p.L, p.J, p.gamma),
        t_span=(0.0, float(grid[-1])),
        y0=y0,
        t_eval=grid,
        method="RK45",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success or sol.y.shape[1] != grid.size:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"RK45 failed: {sol.message}", reached)
    states = [
        CorrelationMatrix(sol.y[:, k].reshape(p.L, p.L), time=float(t))
        for k, t in enumerate(grid)
    ]
    return EvolutionResult(grid, states)


def build_generator(q: float, p: ChainParams) -> GeneratorA:
    """Tridiagonal-plus-corner A(q); the corner carries the periodicity phase."""
    L = p.L
    omega = dispersion(q, p.J)
    eta = corner_phase(q, L)
    hop = 0.5j * omega
    A = np.zeros((L, L), dtype=np.complex128)
    A[0, 1] = 1j * omega
    for i in range(1, L):
        A[i, i - 1] += hop
        A[i, i] = -4.0 * p.gamma
        if i < L - 1:
            A[i, i + 1] = hop
    A[L - 1, 0] += hop * eta
    return GeneratorA(q=float(q), L=L, entries=A, omega=float(omega), eta=eta)


def _propagator(A: GeneratorA) -> Callable[[float], np.ndarray]:
    """Return t -> exp(A t), diagonalising once when V is well conditioned."""
    eigvals, V = scipy.linalg.eig(A.entries)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        logger.warning(
            "Generator at q=%.6g is near-defective (cond(V)=%.3g); "
            "falling back to expm",
            A.q,
            cond,
        )
        return lambda t: scipy.linalg.expm(A.entries * t)
    V_inv = scipy.linalg.inv(V)
    return lambda t: (V * np.exp(eigvals * t)) @ V_inv


def evolve_spectral(g0: ArrayLike, A: GeneratorA, t: float) -> np.ndarray:
    """g(t) = V exp(Lambda t) V^-1 g(0) with A = V Lambda V^-1."""
    g0 = np.asarray(g0, dtype=np.complex128)
    if g0.shape != (A.L,):
        raise ModelError(f"g0 must have length {A.L}")
    if t == 0:
        return g0.copy()
    return _propagator(A)(t) @ g0


def _mode_columns(
    p: ChainParams, times: np.ndarray, l_max: int, workers: int | None
) -> dict[int, np.ndarray]:
    canonical, distinct = unique_mode_indices(p.L)
    e0 = np.zeros(p.L, dtype=np.complex128)
    e0[0] = 1.0

    def column(m: int) -> np.ndarray:
        n = p.L if m == 0 else int(m)
        A = build_generator(2.0 * np.pi * (n / p.L), p)
        prop = _propagator(A)
        return np.stack(
            [e0[: l_max + 1] if t == 0 else prop(t)[: l_max + 1, 0] for t in times]
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        columns = list(pool.map(column, distinct))
    by_mode = dict(zip(distinct.tolist(), columns))
    # (time, l, mode)
    stacked = np.stack([by_mode[int(m)] for m in canonical], axis=-1)
    return {l: stacked[:, l, :] for l in range(l_max + 1)}


def evolve_modes(
    init: DiagonalInitialState,
    p: ChainParams,
    times: ArrayLike,
    *,
    l_max: int | None = None,
    workers: int | None = None,
) -> EvolutionResult:
    """Spectral evolution of every momentum mode, reassembled to C(t)."""
    if init.L != p.L:
        raise ModelError(f"initial state has L={init.L} but parameters say L={p.L}")
    if p.L % 2:
        raise ModelError("mode-resolved evolution needs an even L")
    grid = _check_times(times)
    l_max = p.L // 2 if l_max is None else min(int(l_max), p.L // 2)
    columns = _mode_columns(p, grid, l_max, workers)
    states = []
    for k, t in enumerate(grid):
        g = {l: columns[l][k] * init.cq for l in range(l_max + 1)}
        states.append(assemble_correlations(g, p.L, float(t)))
    return EvolutionResult(grid, states)


def dense_generator(p: ChainParams) -> np.ndarray:
    """Matrix M of the correlation ODE acting on row-major vec(C): d vec/dt = M vec."""
    L = p.L
    T = np.zeros((L, L))
    x = np.arange(L)
    np.add.at(T, (x, (x + 1) % L), p.J)
    np.add.at(T, ((x + 1) % L, x), p.J)
    eye = np.eye(L)
    M = -2j * (np.kron(T, eye) - np.kron(eye, T))
    off_diagonal = 1.0 - eye.ravel()
    M += np.diag(-4.0 * p.gamma * off_diagonal)
    return M

