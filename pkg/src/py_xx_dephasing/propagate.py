"""Mode-by-mode inversion of Laplace kernels and reduction to real space.

A kernel is any callable ``kernel(s, q)`` that returns the Laplace transform
of g_l(t, q) / c(q). It has to accept either an mpmath scalar ``s`` with a
float ``q`` or numpy arrays that broadcast (nodes along axis 0, modes along
axis 1). On the real s axis every kernel of this package equals i^l times a
real function, which is used to halve the mpmath work.
"""

from __future__ import annotations

import logging
import os
import pickle
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from itertools import repeat
from multiprocessing import get_context
from typing import Any, Callable, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .ed_oracle import EvolutionResult
from .laplace import (
    TalbotConfig,
    contour_invert_batch,
    required_nodes,
    talbot_invert,
    talbot_invert_batch,
)
from .model import (
    ChainParams,
    DiagonalInitialState,
    ModelError,
    NumericalError,
    assemble_correlations,
    band_from_modes,
    dispersion,
    mode_arrays,
    representative_positions,
    unique_mode_indices,
)
from .transfer import gl0_finite

logger = logging.getLogger(__name__)

__all__ = [
    "ModeInversionError",
    "unique_mode_indices",
    "invert_modes",
    "contour_modes",
    "ring_is_wide",
    "diagonal_from_modes",
    "offdiagonal_from_modes",
    "transfer_density",
    "transfer_offdiagonal",
    "transfer_correlations",
]

ModeKernel = Callable[[Any, Any], Any]
Backend = Literal["mpmath", "vector"]

VECTOR_MAX_NODES = 44
_BATCH_ELEMENTS = 2**20
_CONTOUR_CHUNK = 4096
_PROCESS_MIN_MODES = 8
_WRAP_MARGIN = 64


class ModeInversionError(NumericalError):
    """Raised when the inversion fails for one or more momentum modes."""

    def __init__(self, failures: Sequence[tuple[int, str]]) -> None:
        self.failures = list(failures)
        modes = ", ".join(str(n) for n, _ in self.failures[:10])
        more = "" if len(self.failures) <= 10 else f" (+{len(self.failures) - 10} more)"
        super().__init__(
            f"inversion failed for modes n={modes}{more}: {self.failures[0][1]}"
        )


@dataclass(frozen=True)
class _Plan:
    backend: Backend
    M: int


def _plan(cfg: TalbotConfig, omega_max: float, t: float) -> _Plan:
    needed = required_nodes(omega_max * t)
    if cfg.backend == "mpmath":
        return _Plan("mpmath", max(cfg.M, needed))
    if cfg.backend == "vector":
        M = max(cfg.vector_nodes, needed)
        if M > VECTOR_MAX_NODES:
            logger.warning(
                "Vector Talbot needs M=%d at t=%.6g; float64 round-off grows "
                "past M=%d",
                M,
                t,
                VECTOR_MAX_NODES,
            )
        return _Plan("vector", M)
    if needed <= VECTOR_MAX_NODES:
        return _Plan("vector", min(max(cfg.vector_nodes, needed), VECTOR_MAX_NODES))
    return _Plan("mpmath", max(cfg.M, needed))


def _chunks(indices: np.ndarray, size: int) -> list[np.ndarray]:
    return [indices[k : k + size] for k in range(0, indices.size, size)]


def _run(
    tasks: Sequence[Any], job: Callable[[Any], Any], workers: int | None
) -> list[Any]:
    if workers == 1 or len(tasks) <= 1:
        return [job(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, tasks))


def _process_count(workers: int | None, n_modes: int) -> int:
    if n_modes < _PROCESS_MIN_MODES:
        return 1
    count = workers if workers is not None else os.cpu_count() or 1
    return max(1, min(count, n_modes))


def _picklable(kernel: ModeKernel) -> bool:
    try:
        pickle.dumps(kernel)
    except (pickle.PicklingError, AttributeError, TypeError):
        return False
    return True


def _mp_block(
    kernel: ModeKernel, sign: complex, t: float, cfg: TalbotConfig, qs: np.ndarray
) -> list[float | str]:
    """mpmath inversions of one block of modes; failures come back as messages."""
    out: list[float | str] = []
    for qk in map(float, qs):
        try:
            value = talbot_invert(
                partial(_signed, kernel, sign, qk), t, cfg, real_valued=True
            )
        except NumericalError as exc:
            out.append(str(exc))
        else:
            out.append(value.real)
    return out


def _signed(kernel: ModeKernel, sign: complex, q: float, s: Any) -> Any:
    return sign * kernel(s, q)


def _mp_blocks(
    kernel: ModeKernel,
    sign: complex,
    t: float,
    cfg: TalbotConfig,
    q_blocks: list[np.ndarray],
    processes: int,
) -> list[list[float | str]]:
    # one mpmath precision context per process
    if processes == 1:
        return [_mp_block(kernel, sign, t, cfg, qs) for qs in q_blocks]
    logger.debug("Inverting %d mode blocks on %d processes", len(q_blocks), processes)
    with ProcessPoolExecutor(
        max_workers=processes, mp_context=get_context("spawn")
    ) as pool:
        return list(
            pool.map(
                _mp_block,
                repeat(kernel),
                repeat(sign),
                repeat(t),
                repeat(cfg),
                q_blocks,
            )
        )


def invert_modes(
    kernel: ModeKernel,
    t: float,
    q: ArrayLike,
    cfg: TalbotConfig | None = None,
    *,
    order: int = 0,
    omega_max: float,
    workers: int | None = None,
    symmetric: bool = True,
) -> np.ndarray:
    """Talbot inversion of ``kernel(s, q_n)`` at time t for every mode.

    ``order`` is the l of the kernel: (-i)^l kernel is inverted as a real
    function and i^l is restored afterwards. ``symmetric`` evaluates only
    one of each pair n, N - n of the standard grid q_n = 2 pi n / N.
    ``omega_max`` bounds the mode frequencies and sets the node count.
    """
    if t <= 0:
        raise ModelError(f"mode inversion needs t > 0, got {t}")
    q_arr = np.asarray(q, dtype=np.float64)
    N = q_arr.size
    cfg = cfg or TalbotConfig()
    plan = _plan(cfg, omega_max, t)
    sign = (-1j) ** (order % 4)
    if symmetric:
        canonical, distinct = unique_mode_indices(N)
        positions = representative_positions(distinct, N)
    else:
        canonical, distinct = np.arange(N), np.arange(N)
        positions = distinct
    logger.debug(
        "Inverting %d of %d modes at t=%.6g (backend=%s, M=%d)",
        positions.size,
        N,
        t,
        plan.backend,
        plan.M,
    )

    failures: list[tuple[int, str]] = []
    values = np.zeros(positions.size, dtype=np.float64)
    if plan.backend == "vector":
        size = max(1, _BATCH_ELEMENTS // (2 * plan.M))

        def batch(block: np.ndarray) -> np.ndarray | NumericalError:
            qb = q_arr[positions[block]][None, :]

            def rule(M: int) -> np.ndarray:
                return talbot_invert_batch(
                    lambda s: sign * kernel(s, qb), t, M, shift=cfg.shift
                )

            try:
                out = rule(plan.M)
                fine = rule(plan.M + 8) if cfg.precision_mode == "richardson" else out
            except NumericalError as exc:
                return exc
            if cfg.precision_mode == "richardson":
                spread = float(np.max(np.abs(fine - out)))
                if spread > cfg.tolerance:
                    logger.warning(
                        "Talbot estimate at t=%.6g differs by %.3g between "
                        "M=%d and M=%d",
                        t,
                        spread,
                        plan.M,
                        plan.M + 8,
                    )
                out = fine
            return out.real

        blocks = _chunks(np.arange(positions.size), size)
        for block, result in zip(blocks, _run(blocks, batch, workers)):
            if isinstance(result, NumericalError):
                failures.extend((int(positions[k]) + 1, str(result)) for k in block)
            else:
                values[block] = result
    else:
        mode_cfg = replace(cfg, M=plan.M, backend="mpmath")
        q_modes = q_arr[positions]
        processes = _process_count(workers, positions.size)
        if processes > 1 and not _picklable(kernel):
            logger.debug("Kernel is not picklable; inverting modes in-process")
            processes = 1
        blocks = [
            block
            for block in np.array_split(np.arange(positions.size), 4 * processes)
            if block.size
        ]
        results = _mp_blocks(
            kernel, sign, t, mode_cfg, [q_modes[block] for block in blocks], processes
        )
        for block, result in zip(blocks, results):
            for k, value in zip(block, result):
                if isinstance(value, str):
                    failures.append((int(positions[k]) + 1, value))
                else:
                    values[k] = value

    if failures:
        raise ModeInversionError(failures)
    lookup = np.searchsorted(distinct, canonical)
    return (1j) ** (order % 4) * values[lookup]


def contour_modes(
    t: float,
    omegas: ArrayLike,
    gamma: float,
    *,
    workers: int | None = None,
    talbot: TalbotConfig | None = None,
) -> np.ndarray:
    """e^{-4 gamma t} L^-1[1/(sqrt(s^2 + omega^2) - 4 gamma)](t) per mode."""
    omega = np.asarray(omegas, dtype=np.float64)
    distinct, lookup = np.unique(omega, return_inverse=True)
    blocks = _chunks(distinct, _CONTOUR_CHUNK)

    def batch(block: np.ndarray) -> np.ndarray:
        return contour_invert_batch(t, block, gamma, damped=True, talbot=talbot).real

    values = np.concatenate(_run(blocks, batch, workers))
    return values[lookup.reshape(omega.shape)]


def diagonal_from_modes(kernel_values: ArrayLike, cq: ArrayLike) -> np.ndarray:
    """C_{x,x} = (1/N) sum_n e^{i q_n x} g_0(q_n) c(q_n)."""
    return band_from_modes(np.asarray(kernel_values) * np.asarray(cq), 0).real


def offdiagonal_from_modes(
    kernel_values: ArrayLike, cq: ArrayLike, l: int
) -> np.ndarray:
    """C_{x+l,x} for x = 0..N-1 from per-mode kernel values."""
    return band_from_modes(np.asarray(kernel_values) * np.asarray(cq), l)


def _check_transfer_input(init: DiagonalInitialState, p: ChainParams) -> None:
    if init.L != p.L:
        raise ModelError(f"initial state has L={init.L} but parameters say L={p.L}")
    if p.L % 2:
        raise ModelError("the transfer pipeline needs an even L")


def _finite_kernel(p: ChainParams, l: int) -> ModeKernel:
    return partial(gl0_finite, l=l, p=p)


def ring_is_wide(p: ChainParams, t: float) -> bool:
    """True when nothing released at t=0 reaches half-way round the ring by t.

    Amplitudes beyond the light cone 4|J|t fall off like J_d(4|J|t); at
    d >= 8|J|t + 64 they are below double precision.
    """
    return p.L // 2 >= 8.0 * abs(p.J) * t + _WRAP_MARGIN


def _band_values(
    t: float,
    l: int,
    q: np.ndarray,
    p: ChainParams,
    cfg: TalbotConfig | None,
    workers: int | None,
) -> np.ndarray:
    """Per-mode g_l(t, q)/c(q) of the ring.

    With the auto backend, densities that would need multiprecision Talbot on
    a wide ring go through the contour inversion of the infinite-chain
    kernel, which the ring equals to double precision before anything wraps.
    """
    cfg = cfg or TalbotConfig()
    omega_max = 8.0 * abs(p.J)
    if l == 0 and cfg.backend == "auto" and ring_is_wide(p, t):
        if _plan(cfg, omega_max, t).backend == "mpmath":
            logger.info(
                "Density at t=%.6g on L=%d inverted on the branch-cut contour",
                t,
                p.L,
            )
            omega = dispersion(q, p.J)
            values = contour_modes(t, omega, p.gamma, workers=workers, talbot=cfg)
            return values.astype(np.complex128)
    return invert_modes(
        _finite_kernel(p, l), t, q, cfg, order=l, omega_max=omega_max, workers=workers
    )


def transfer_offdiagonal(
    t: float,
    l: int,
    init: DiagonalInitialState,
    p: ChainParams,
    cfg: TalbotConfig | None = None,
    *,
    workers: int | None = None,
) -> np.ndarray:
    """C_{x+l,x}(t) of the finite chain from the closed-form resolvent."""
    _check_transfer_input(init, p)
    if not 0 <= l <= p.L // 2:
        raise ModelError(f"off-diagonal order must be in [0, {p.L // 2}], got {l}")
    if t == 0:
        if l == 0:
            return init.c.astype(np.complex128)
        return np.zeros(p.L, dtype=np.complex128)
    _, q, _ = mode_arrays(p.L, p.J)
    values = _band_values(t, l, q, p, cfg, workers)
    return offdiagonal_from_modes(values, init.cq, l)


def transfer_density(
    t: float,
    init: DiagonalInitialState,
    p: ChainParams,
    cfg: TalbotConfig | None = None,
    *,
    workers: int | None = None,
) -> np.ndarray:
    """C_{x,x}(t) of the finite chain from g00_finite."""
    return transfer_offdiagonal(t, 0, init, p, cfg, workers=workers).real


def transfer_correlations(
    times: ArrayLike,
    init: DiagonalInitialState,
    p: ChainParams,
    l_max: int | None = None,
    cfg: TalbotConfig | None = None,
    *,
    workers: int | None = None,
) -> EvolutionResult:
    """Full (or banded up to ``l_max``) C(t) from the transfer pipeline."""
    _check_transfer_input(init, p)
    grid = np.asarray(times, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ModelError("times must be >= 0 and strictly increasing")
    l_max = p.L // 2 if l_max is None else min(int(l_max), p.L // 2)
    _, q, _ = mode_arrays(p.L, p.J)
    states = []
    for t in grid:
        g: dict[int, np.ndarray] = {}
        for l in range(l_max + 1):
            if t == 0:
                g[l] = init.cq if l == 0 else np.zeros(p.L, dtype=np.complex128)
                continue
            g[l] = _band_values(float(t), l, q, p, cfg, workers) * init.cq
        states.append(assemble_correlations(g, p.L, float(t)))
    return EvolutionResult(grid, states)
