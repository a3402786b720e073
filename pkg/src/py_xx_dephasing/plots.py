"""gnuplot scripts reproducing the standard figure layouts from run CSVs."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

import pandas as pd

from .model import ModelError

logger = logging.getLogger(__name__)

Figure = Literal["fig2", "fig3a", "fig3b", "fig4"]

EXPECTED_COLUMNS: dict[str, tuple[str, ...]] = {
    "fig2": ("t", "x", "value_re"),
    "fig3a": ("t", "M"),
    "fig3b": ("t", "beta"),
    "fig4": ("t", "l", "center", "max"),
}


class PlotSchemaError(ModelError):
    """Raised when a data file lacks the columns a figure needs."""


def _header(data: Path, output: Path) -> list[str]:
    return [
        "# generated by xx-dephasing",
        "set datafile separator ','",
        "set key top right",
        "set terminal pngcairo size 900,600",
        f"set output '{output.name}'",
        f"data = '{data.name}'",
    ]


def _fig2(frame: pd.DataFrame, gamma: float | None) -> list[str]:
    lines = ["set xlabel 'x'", "set ylabel '<sigma_z^x>'"]
    plots = []
    for t in sorted(float(v) for v in frame["t"].unique()):
        label = f"gamma t = {gamma * t:.3g}" if gamma else f"t = {t:.6g}"
        plots.append(
            f"data every ::1 using 2:($1=={t!r} ? -$3 : 1/0) with lines title '{label}'"
        )
    lines.append("plot " + ", \\\n     ".join(plots))
    return lines


def _time_axis(gamma: float | None) -> tuple[str, str]:
    if gamma:
        return "gamma t", f"($1*{gamma!r})"
    return "t", "1"


def _fig3a(gamma: float | None) -> list[str]:
    label, column = _time_axis(gamma)
    return [
        "set logscale xy",
        f"set xlabel '{label}'",
        "set ylabel 'M(t)'",
        f"plot data every ::1 using {column}:2 with lines title 'M'",
    ]


def _fig3b(gamma: float | None) -> list[str]:
    label, column = _time_axis(gamma)
    return [
        "set logscale x",
        f"set xlabel '{label}'",
        "set ylabel 'beta(t)'",
        "set yrange [0:1.2]",
        f"plot data every ::1 using {column}:3 with lines title 'beta', \\",
        "     1 with lines dashtype 2 title 'ballistic', \\",
        "     0.5 with lines dashtype 3 title 'diffusive'",
    ]


def _fig4(frame: pd.DataFrame, gamma: float | None) -> list[str]:
    label, column = _time_axis(gamma)
    plots = []
    for l in sorted(int(v) for v in frame["l"].unique()):
        plots.append(
            f"data every ::1 using {column}:($2=={l} ? $3 : 1/0) "
            f"with linespoints title 'l = {l}'"
        )
    first = frame.loc[frame["t"].idxmin()]
    t0 = float(first["t"]) * (gamma or 1.0)
    y0 = float(first["center"]) if float(first["center"]) > 0 else 1.0
    for slope in (-1.5, -2.5):
        plots.append(f"{y0!r}*(x/{t0!r})**({slope}) dashtype 2 title 'slope {slope}'")
    return [
        "set logscale xy",
        f"set xlabel '{label}'",
        "set ylabel '|C_{x+l,x}|'",
        "plot " + ", \\\n     ".join(plots),
    ]


def emit_plot_script(
    data: str | Path,
    figure: Figure,
    *,
    gamma: float | None = None,
    output: str | Path | None = None,
) -> Path:
    """Write a gnuplot script for ``figure`` next to ``data``.

    Columns are checked first; nothing is written when any is missing.
    """
    data = Path(data)
    if figure not in EXPECTED_COLUMNS:
        raise ModelError(f"unknown figure {figure!r}")
    if not data.exists():
        raise PlotSchemaError(f"data file {data} does not exist")
    frame = pd.read_csv(data)
    expected = EXPECTED_COLUMNS[figure]
    missing = [column for column in expected if column not in frame.columns]
    if missing:
        raise PlotSchemaError(
            f"{figure} needs columns {list(expected)}, found {list(frame.columns)} "
            f"(missing {missing})"
        )
    script = Path(output) if output else data.with_suffix(f".{figure}.gp")
    image = script.with_suffix(".png")
    lines = _header(data, image)
    if figure == "fig2":
        lines += _fig2(frame, gamma)
    elif figure == "fig3a":
        lines += _fig3a(gamma)
    elif figure == "fig3b":
        lines += _fig3b(gamma)
    else:
        lines += _fig4(frame, gamma)
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote plot script %s", script)
    return script
