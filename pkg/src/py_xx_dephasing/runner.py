"""Command handlers behind the CLI: compute, export, manifest."""

from __future__ import annotations

import logging
import time
import tracemalloc
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import scipy.linalg
import statsmodels.api as sm

from .artifacts import (
    artifact_path,
    resolve_output_prefix,
    utc_now_iso,
    write_csv,
    write_manifest,
)
from .ed_oracle import EvolutionResult, dense_generator, evolve_direct
from .model import (
    ChainParams,
    CorrelationMatrix,
    DiagonalInitialState,
    ModelError,
    NumericalError,
    mode_arrays,
)
from .observables import (
    FitError,
    band_decay,
    fit_powerlaw,
    log_derivative,
    magnetization_profile,
    trajectory_frame,
    transport_series,
)
from .plots import emit_plot_script
from .propagate import (
    ModeInversionError,
    transfer_correlations,
    transfer_density,
    transfer_offdiagonal,
)
from .schemas import RunConfig
from .thermo import (
    density_longtime,
    density_profile,
    density_shorttime,
    offdiag_longtime,
)
from .transfer import g00_finite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

BENCH_EXPONENT_BAND = (1.8, 2.3)
BENCH_MIN_WALL_S = 0.5
PROFILE_COLUMNS = ["t", "x", "value_re", "value_im", "method"]


@dataclass
class Outcome:
    files: list[Path] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)
    status: int = EXIT_OK


def build_initial(cfg: RunConfig) -> DiagonalInitialState:
    L = cfg.chain.L
    if cfg.initial == "delta":
        return DiagonalInitialState.delta(L, cfg.site)
    if cfg.initial == "domain-wall":
        return DiagonalInitialState.domain_wall(L)
    init = DiagonalInitialState.from_csv(cfg.initial_csv or "")
    if init.L != L:
        raise ModelError(f"{cfg.initial_csv} holds {init.L} sites but L={L}")
    return init


def _signed_offsets(L: int, site: int) -> np.ndarray:
    return np.mod(np.arange(L) - site + L // 2, L) - L // 2


def _window_mask(cfg: RunConfig) -> np.ndarray:
    x = np.arange(cfg.chain.L)
    if cfg.window is None:
        return np.ones(x.size, dtype=bool)
    return np.abs(x - cfg.chain.L // 2) <= cfg.window


def _profile_frame(
    t: float, values: np.ndarray, method: str, mask: np.ndarray
) -> pd.DataFrame:
    values = np.asarray(values, dtype=np.complex128)
    x = np.arange(values.size)[mask]
    return pd.DataFrame(
        {
            "t": np.full(x.size, t),
            "x": x,
            "value_re": values.real[mask],
            "value_im": values.imag[mask],
            "method": method,
        }
    )


def _concat(frames: list[pd.DataFrame], columns: list[str]) -> pd.DataFrame:
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)


def _ed_states(
    cfg: RunConfig, init: DiagonalInitialState, p: ChainParams
) -> EvolutionResult:
    return evolve_direct(
        CorrelationMatrix.from_initial(init),
        p,
        cfg.time_grid(),
        dense_max_L=cfg.dense_max_L,
    )


def _structure_report(
    states: list[CorrelationMatrix], total: float
) -> dict[str, float]:
    return {
        "max_hermiticity_error": max(C.hermiticity_error() for C in states),
        "max_structure_error": max(C.structure_error() for C in states),
        "max_trace_drift": max(abs(C.trace() - total) for C in states),
    }


def _run_evolve(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    init = build_initial(cfg)
    if cfg.method == "ed":
        result = _ed_states(cfg, init, p)
    else:
        result = transfer_correlations(
            cfg.time_grid(), init, p, None, cfg.talbot.to_config(), workers=cfg.threads
        )
    frame = trajectory_frame(result.states, p.J)
    final = result.states[-1]
    files = [write_csv(frame, artifact_path(prefix, "trajectory.csv"))]
    matrix_csv = artifact_path(prefix, "final_matrix.csv")
    write_csv(final.to_frame(), matrix_csv)
    matrix_json = artifact_path(prefix, "final_matrix.json")
    matrix_json.write_text(final.to_json() + "\n", encoding="utf-8")
    files += [matrix_csv, matrix_json]
    extra = _structure_report(result.states, float(np.sum(init.c)))
    return Outcome(files, extra)


def _run_density(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    init = build_initial(cfg)
    grid = cfg.time_grid()
    mask = _window_mask(cfg)
    talbot = cfg.talbot.to_config()
    frames: list[pd.DataFrame] = []
    if cfg.method == "ed":
        for C in _ed_states(cfg, init, p).states:
            frames.append(_profile_frame(C.time, C.diagonal(0), "ed", mask))
    elif cfg.method == "asymptotic":
        offsets = _signed_offsets(p.L, cfg.site)
        for t in grid:
            short = density_shorttime(offsets, float(t), p)
            frames.append(_profile_frame(float(t), short, "shorttime", mask))
            if p.gamma > 0 and t > 0:
                long = density_longtime(offsets, float(t), p)
                frames.append(_profile_frame(float(t), long, "longtime", mask))
    else:
        for t in grid:
            if cfg.method == "transfer-talbot":
                values = transfer_density(
                    float(t), init, p, talbot, workers=cfg.threads
                )
            else:
                values = density_profile(
                    float(t), init, p, "contour", cfg=talbot, workers=cfg.threads
                )
            frames.append(_profile_frame(float(t), values, cfg.method, mask))
    data = write_csv(
        _concat(frames, PROFILE_COLUMNS), artifact_path(prefix, "density.csv")
    )
    files = [data]
    if cfg.plot:
        files.append(emit_plot_script(data, "fig2", gamma=p.gamma or None))
    return Outcome(files)


def _decay_fits(decay: pd.DataFrame, gamma: float) -> dict[str, Any]:
    fits: dict[str, Any] = {}
    for l, rows in decay.groupby("l"):
        rows = rows[rows["t"] > 0]
        entry: dict[str, Any] = {}
        for site in ("center", "max"):
            try:
                fit = fit_powerlaw(rows["t"], rows[site])
            except FitError as exc:
                logger.info("No power-law fit for l=%d (%s): %s", l, site, exc)
                continue
            entry[site] = {"exponent": fit.exponent, "stderr": fit.stderr}
        if entry:
            if gamma > 0:
                entry["gamma_t_window"] = [
                    float(rows["t"].min() * gamma),
                    float(rows["t"].max() * gamma),
                ]
            entry["expected_center"] = -(int(np.ceil(int(l) / 2)) + 0.5)
            fits[str(int(l))] = entry
    return fits


def _run_offdiag(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    init = build_initial(cfg)
    grid = cfg.time_grid()
    mask = _window_mask(cfg)
    talbot = cfg.talbot.to_config()
    orders = range(1, min(cfg.lmax, p.L // 2) + 1)
    bands: dict[int, list[tuple[float, np.ndarray]]] = {l: [] for l in orders}
    if cfg.method == "ed":
        states = _ed_states(cfg, init, p).states
        for C in states:
            for l in orders:
                bands[l].append((C.time, C.diagonal(l)))
    elif cfg.method == "asymptotic":
        offsets = _signed_offsets(p.L, cfg.site)
        for t in grid[grid > 0]:
            for l in orders:
                bands[l].append((float(t), offdiag_longtime(offsets, l, float(t), p)))
    else:
        for t in grid:
            for l in orders:
                band = transfer_offdiagonal(
                    float(t), l, init, p, talbot, workers=cfg.threads
                )
                bands[l].append((float(t), band))

    files: list[Path] = []
    decay_rows = []
    for l in orders:
        frames = [_profile_frame(t, band, cfg.method, mask) for t, band in bands[l]]
        files.append(
            write_csv(
                _concat(frames, PROFILE_COLUMNS),
                artifact_path(prefix, f"offdiag_l{l}.csv"),
            )
        )
        arrays = [band for _, band in bands[l]]
        centre = band_decay(arrays, l, "center", release=cfg.site)
        peak = band_decay(arrays, l, "max")
        for (t, _), c, m in zip(bands[l], centre, peak):
            decay_rows.append({"t": t, "l": l, "center": c, "max": m})
    decay = pd.DataFrame(decay_rows, columns=["t", "l", "center", "max"])
    decay_path = write_csv(decay, artifact_path(prefix, "decay.csv"))
    files.append(decay_path)
    if cfg.plot:
        files.append(emit_plot_script(decay_path, "fig4", gamma=p.gamma or None))
    return Outcome(files, {"fits": _decay_fits(decay, p.gamma)})


def _run_beta(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    init = build_initial(cfg)
    grid = cfg.time_grid()
    talbot = cfg.talbot.to_config()
    if cfg.method == "ed":
        profiles = [magnetization_profile(C) for C in _ed_states(cfg, init, p).states]
    elif cfg.method == "transfer-talbot":
        profiles = [
            -transfer_density(float(t), init, p, talbot, workers=cfg.threads)
            for t in grid
        ]
    else:
        profiles = [
            -density_profile(
                float(t), init, p, "contour", cfg=talbot, workers=cfg.threads
            )
            for t in grid
        ]
    meta = {
        "L": p.L,
        "J": p.J,
        "gamma": p.gamma,
        "initial": init.tag,
        "method": cfg.method,
    }
    series = log_derivative(transport_series(grid, profiles, meta), smooth=cfg.smooth)
    csv_path = artifact_path(prefix, "beta.csv")
    series.to_csv(csv_path)
    logger.info("Wrote %s (%d rows)", csv_path, series.times.size)
    json_path = artifact_path(prefix, "beta.json")
    json_path.write_text(series.to_json() + "\n", encoding="utf-8")
    files = [csv_path, json_path]
    if cfg.plot:
        gamma = p.gamma or None
        files.append(emit_plot_script(csv_path, "fig3a", gamma=gamma))
        files.append(emit_plot_script(csv_path, "fig3b", gamma=gamma))
    return Outcome(files)


def _run_compare(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    init = build_initial(cfg)
    grid = cfg.time_grid()
    l_max = min(cfg.lmax, p.L // 2)
    exact = _ed_states(cfg, init, p)
    transfer = transfer_correlations(
        grid, init, p, l_max, cfg.talbot.to_config(), workers=cfg.threads
    )
    rows = []
    for ed_state, tr_state in zip(exact.states, transfer.states):
        for l in range(l_max + 1):
            diff = np.max(np.abs(ed_state.diagonal(l) - tr_state.diagonal(l)))
            rows.append({"t": ed_state.time, "l": l, "max_abs_diff": float(diff)})
    frame = pd.DataFrame(rows, columns=["t", "l", "max_abs_diff"])
    files = [write_csv(frame, artifact_path(prefix, "compare.csv"))]
    worst = float(frame["max_abs_diff"].max())
    logger.info(
        "max |ED - transfer| = %.3e (tolerance %.1e)", worst, cfg.compare_tolerance
    )
    status = EXIT_OK if worst <= cfg.compare_tolerance else EXIT_NUMERICAL
    if status != EXIT_OK:
        logger.error("ED and transfer pipelines disagree by %.3e", worst)
    extra = {"max_abs_diff": worst, "tolerance": cfg.compare_tolerance}
    extra.update(_structure_report(exact.states, float(np.sum(init.c))))
    return Outcome(files, extra, status)


def _run_resolvent_dump(cfg: RunConfig, prefix: Path) -> Outcome:
    p = cfg.chain.params()
    _, q, _ = mode_arrays(p.L, p.J)
    grid = cfg.resolvent
    s = grid.re + 1j * np.linspace(-grid.imag_max, grid.imag_max, grid.count)
    values = np.asarray(g00_finite(s[:, None], q[None, :], p))
    s_all = np.broadcast_to(s[:, None], values.shape).ravel()
    frame = pd.DataFrame(
        {
            "s_re": s_all.real,
            "s_im": s_all.imag,
            "q": np.broadcast_to(q[None, :], values.shape).ravel(),
            "g00_re": values.real.ravel(),
            "g00_im": values.imag.ravel(),
        }
    )
    return Outcome([write_csv(frame, artifact_path(prefix, "resolvent.csv"))])


def _scaling_exponent(sizes: list[int], walls: list[float]) -> float | None:
    if len(sizes) < 2:
        return None
    fit = sm.OLS(np.log(walls), sm.add_constant(np.log(sizes))).fit()
    return float(fit.params[1])


def _timed(job: Callable[[], Any]) -> tuple[float, float]:
    tracemalloc.start()
    try:
        start = time.perf_counter()
        job()
        wall = time.perf_counter() - start
        peak = tracemalloc.get_traced_memory()[1] / 2**20
    finally:
        tracemalloc.stop()
    return wall, peak


def _dense_step(p: ChainParams, t: float, vec0: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(dense_generator(p) * t) @ vec0


def _run_bench(cfg: RunConfig, prefix: Path) -> Outcome:
    t = float(cfg.time_grid()[-1])
    if t <= 0:
        raise ModelError("bench needs a positive final time")
    talbot = cfg.talbot.to_config()
    rows = []
    for L in cfg.bench_sizes:
        p = ChainParams(L=L, J=cfg.chain.J, gamma=cfg.chain.gamma)
        init = DiagonalInitialState.delta(L)
        wall, peak = _timed(
            partial(transfer_density, t, init, p, talbot, workers=cfg.threads)
        )
        logger.info("bench transfer-talbot L=%d: %.3f s, peak %.1f MB", L, wall, peak)
        rows.append(("transfer-talbot", L, wall, peak))
    for L in cfg.bench_dense_sizes:
        p = ChainParams(L=L, J=cfg.chain.J, gamma=cfg.chain.gamma)
        vec0 = np.diag(DiagonalInitialState.delta(L).c).astype(np.complex128).ravel()
        wall, peak = _timed(partial(_dense_step, p, t, vec0))
        logger.info("bench dense L=%d: %.3f s, peak %.1f MB", L, wall, peak)
        rows.append(("dense", L, wall, peak))
    frame = pd.DataFrame(rows, columns=["method", "L", "wall_s", "peak_mb"])
    frame["per_mode_us"] = frame["wall_s"] / frame["L"] * 1e6
    frame = frame[["L", "method", "wall_s", "peak_mb", "per_mode_us"]]
    files = [write_csv(frame, artifact_path(prefix, "bench.csv"))]

    extra: dict[str, Any] = {"budget_s": cfg.bench_budget_s}
    for method in ("transfer-talbot", "dense"):
        part = frame[frame["method"] == method]
        exponent = _scaling_exponent(part["L"].tolist(), part["wall_s"].tolist())
        extra[f"{method}_exponent"] = exponent
    return Outcome(files, extra, _bench_status(frame, extra, cfg.bench_budget_s))


def _bench_status(frame: pd.DataFrame, extra: dict[str, Any], budget: float) -> int:
    """Fail on a transfer point over budget or on worse than L^2.3 scaling.

    The exponent is only judged when every transfer point takes at least
    BENCH_MIN_WALL_S.

    Faster scaling is expected: profiles are reduced by FFT, so the transfer
    pipeline grows like L log L.
    """
    status = EXIT_OK
    transfer = frame[frame["method"] == "transfer-talbot"]
    over = transfer.loc[transfer["wall_s"] > budget, "L"].tolist()
    extra["over_budget"] = [int(L) for L in over]
    if over:
        logger.error("Transfer bench exceeded %.0f s at L=%s", budget, over)
        status = EXIT_NUMERICAL
    exponent = extra["transfer-talbot_exponent"]
    low, high = BENCH_EXPONENT_BAND
    if exponent is None:
        return status
    if transfer["wall_s"].min() < BENCH_MIN_WALL_S:
        logger.info("Transfer bench points too short to judge scaling")
        return status
    if exponent > high:
        logger.error("Transfer runtime exponent %.2f above %.1f", exponent, high)
        status = EXIT_NUMERICAL
    elif exponent < low:
        logger.warning(
            "Transfer runtime exponent %.2f below %.1f (L log L reduction)",
            exponent,
            low,
        )
    return status


_HANDLERS: dict[str, Callable[[RunConfig, Path], Outcome]] = {
    "evolve": _run_evolve,
    "density": _run_density,
    "offdiag": _run_offdiag,
    "beta": _run_beta,
    "compare": _run_compare,
    "resolvent-dump": _run_resolvent_dump,
    "bench": _run_bench,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    started_at = utc_now_iso()
    clock = time.perf_counter()
    prefix = resolve_output_prefix(cfg.output, cfg.command)
    logger.info(
        "Starting %s (L=%d, J=%g, gamma=%g, method=%s)",
        cfg.command,
        cfg.chain.L,
        cfg.chain.J,
        cfg.chain.gamma,
        cfg.method,
    )
    failures: list[tuple[int, str]] = []
    try:
        outcome = _HANDLERS[cfg.command](cfg, prefix)
    except ModelError as exc:
        logger.error("Invalid input: %s", exc)
        outcome = Outcome(status=EXIT_CONFIG)
    except ModeInversionError as exc:
        logger.error("%s", exc)
        failures = exc.failures
        outcome = Outcome(status=EXIT_NUMERICAL)
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        outcome = Outcome(status=EXIT_NUMERICAL)
    wall_time = time.perf_counter() - clock
    manifest = write_manifest(
        prefix,
        cfg.model_dump(mode="json"),
        outcome.files,
        wall_time=wall_time,
        started_at=started_at,
        threads=cfg.threads,
        failures=failures,
        extra=outcome.extra,
    )
    logger.info(
        "Finished %s in %.3f s (status %d, manifest %s)",
        cfg.command,
        wall_time,
        outcome.status,
        manifest,
    )
    return outcome.status
