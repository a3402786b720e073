"""Command-line entry point for the dephasing XX chain pipelines."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from .runner import EXIT_CONFIG, run
from .schemas import RunConfig
from .utils.presets import get_preset, preset_names

logger = logging.getLogger(__name__)

COMMANDS = [
    "evolve",
    "density",
    "offdiag",
    "beta",
    "compare",
    "resolvent-dump",
    "bench",
]

_EPILOG = """\
CSV schemas:
  evolve          t,x,m,j  plus final matrix x,y,re,im and JSON
  density         t,x,value_re,value_im,method
  offdiag         t,x,value_re,value_im,method per l; t,l,center,max decay table
  beta            t,M,beta  plus JSON with a meta block
  compare         t,l,max_abs_diff
  resolvent-dump  s_re,s_im,q,g00_re,g00_im
  bench           L,method,wall_s,peak_mb,per_mode_us
Every run also writes <prefix>_manifest.json.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

# flat config key -> (section, field); section None means top level
_FLAT_KEYS: dict[str, tuple[str | None, str]] = {
    "L": ("chain", "L"),
    "J": ("chain", "J"),
    "gamma": ("chain", "gamma"),
    "t": ("times", "values"),
    "t_values": ("times", "values"),
    "t_start": ("times", "start"),
    "t_stop": ("times", "stop"),
    "t_count": ("times", "count"),
    "t_spacing": ("times", "spacing"),
    "t_per_decade": ("times", "per_decade"),
    "t_scale": ("times", "scale"),
    "M": ("talbot", "M"),
    "talbot_backend": ("talbot", "backend"),
    "precision_mode": ("talbot", "precision_mode"),
    "vector_nodes": ("talbot", "vector_nodes"),
    "talbot_tolerance": ("talbot", "tolerance"),
    "s_re": ("resolvent", "re"),
    "s_imag_max": ("resolvent", "imag_max"),
    "s_count": ("resolvent", "count"),
}
_LIST_FIELDS = {"values", "bench_sizes", "bench_dense_sizes"}


def _int_like(raw: str) -> int:
    """Integers that may be written as 1e6."""
    value = float(raw)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"expected an integer, got {raw!r}")
    return int(value)


def _list_value(raw: str) -> list[str]:
    return [chunk.strip() for chunk in raw.split(",") if chunk.strip()]


def _assign(config: dict[str, Any], key: str, value: Any) -> None:
    section, name = _FLAT_KEYS.get(key, (None, key))
    if isinstance(value, str) and name in _LIST_FIELDS:
        value = _list_value(value)
    if section is None:
        config[name] = value
    else:
        config.setdefault(section, {})[name] = value


def _merge(config: dict[str, Any], layer: dict[str, Any]) -> None:
    for key, value in layer.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        elif isinstance(value, dict):
            config[key] = dict(value)
        else:
            config[key] = value


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    config: dict[str, Any] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        _assign(config, key, value)
    return config


def _env_layer() -> dict[str, Any]:
    layer: dict[str, Any] = {}
    threads = os.getenv("XX_DEPHASING_THREADS")
    if threads and threads.strip().lower() != "auto":
        layer["threads"] = threads.strip()
    output = os.getenv("XX_DEPHASING_OUTPUT")
    if output:
        layer["output"] = output
    dense_max = os.getenv("XX_DEPHASING_DENSE_MAX_L")
    if dense_max:
        layer["dense_max_L"] = dense_max
    return layer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xx-dephasing",
        description="Correlation dynamics of the XX chain with dephasing.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline to run")
    parser.add_argument(
        "--preset",
        choices=preset_names(),
        default=argparse.SUPPRESS,
        help="Start from a named scenario",
    )
    parser.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        help="Flat key=value file applied over the preset",
    )
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Single config override (repeatable)",
    )
    parser.add_argument(
        "--L", type=_int_like, default=argparse.SUPPRESS, help="Chain length"
    )
    parser.add_argument(
        "--J", type=float, default=argparse.SUPPRESS, help="Hopping (default: 1)"
    )
    parser.add_argument(
        "--gamma",
        type=float,
        default=argparse.SUPPRESS,
        help="Dephasing rate (default: 0)",
    )
    parser.add_argument(
        "--t",
        type=float,
        nargs="+",
        default=argparse.SUPPRESS,
        help="Explicit evolution times",
    )
    parser.add_argument("--t-start", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--t-stop", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--t-count", type=int, default=argparse.SUPPRESS)
    parser.add_argument(
        "--t-spacing", choices=["linear", "log"], default=argparse.SUPPRESS
    )
    parser.add_argument("--t-per-decade", type=int, default=argparse.SUPPRESS)
    parser.add_argument(
        "--gamma-t",
        action="store_const",
        const="gamma_t",
        dest="t_scale",
        default=argparse.SUPPRESS,
        help="Interpret times as gamma*t",
    )
    parser.add_argument(
        "--initial",
        choices=["delta", "domain-wall", "custom-csv"],
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--initial-csv", default=argparse.SUPPRESS, help="CSV with a 'c' column"
    )
    parser.add_argument(
        "--site", type=int, default=argparse.SUPPRESS, help="Delta release site"
    )
    parser.add_argument(
        "--method",
        choices=["ed", "transfer-talbot", "transfer-contour", "asymptotic"],
        default=argparse.SUPPRESS,
    )
    parser.add_argument("--nq", type=_int_like, default=argparse.SUPPRESS)
    parser.add_argument("--lmax", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--window", type=int, default=argparse.SUPPRESS)
    parser.add_argument(
        "--output",
        default=argparse.SUPPRESS,
        help=(
            "Output prefix (default: outputs/xx_<command>_<date> "
            "or XX_DEPHASING_OUTPUT)"
        ),
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=argparse.SUPPRESS,
        help="Worker threads (default: auto or XX_DEPHASING_THREADS)",
    )
    parser.add_argument("--M", type=int, default=argparse.SUPPRESS, help="Talbot nodes")
    parser.add_argument(
        "--talbot-backend",
        choices=["auto", "mpmath", "vector"],
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--precision-mode",
        choices=["fixed", "richardson"],
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--tolerance",
        type=float,
        dest="compare_tolerance",
        default=argparse.SUPPRESS,
        help="compare: maximum allowed |ED - transfer| (default: 1e-6)",
    )
    parser.add_argument(
        "--bench-sizes",
        type=_int_like,
        nargs="+",
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--plot",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Also write gnuplot scripts",
    )
    parser.add_argument(
        "--smooth",
        action="store_true",
        default=argparse.SUPPRESS,
        help="beta: Savitzky-Golay smoothing",
    )
    parser.add_argument(
        "--log-level",
        default=os.getenv("XX_DEPHASING_LOG_LEVEL", "INFO"),
        help="Logging level (default: INFO or XX_DEPHASING_LOG_LEVEL)",
    )
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer preset, config file, environment and flags into a RunConfig."""
    options = vars(args).copy()
    options.pop("log_level", None)
    config: dict[str, Any] = {}
    preset = options.pop("preset", None)
    if preset:
        sections = get_preset(preset)
        _merge(config, {k: v for k, v in sections.items() if k != "run"})
        _merge(config, sections.get("run", {}))
        config["preset"] = preset
    config_file = options.pop("config", None)
    if config_file:
        _merge(config, read_config_file(config_file))
    _merge(config, _env_layer())
    overrides = options.pop("set", [])
    for key, value in options.items():
        if key == "t":
            _assign(config, "t_values", value)
        else:
            _assign(config, key, value)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        _assign(config, key, value)
    if preset and config.get("command") != args.command:
        logger.info(
            "Preset %s targets %s; running %s",
            preset,
            config.get("command"),
            args.command,
        )
    config["command"] = args.command
    return RunConfig.model_validate(config)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
    except ValidationError as exc:
        logger.error("Invalid configuration:\n%s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
