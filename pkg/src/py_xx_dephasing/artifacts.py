"""Output paths, CSV/JSON writers and the run manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping

import pandas as pd

from . import __version__

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"
_DATE_FORMAT = "%Y-%m-%d_%H-%M-%S"
_DEFAULT_PREFIX = "xx_{command}_{date}"


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def resolve_output_prefix(output: str | os.PathLike | None, command: str) -> Path:
    """Prefix for every file of a run; date-stamped under ./outputs when unset."""
    if output:
        prefix = Path(output)
    else:
        date_stamp = datetime.now().strftime(_DATE_FORMAT)
        command = command.replace("-", "_")
        name = _DEFAULT_PREFIX.format(command=command, date=date_stamp)
        prefix = Path.cwd() / "outputs" / name
    prefix.parent.mkdir(parents=True, exist_ok=True)
    return prefix


def artifact_path(prefix: Path, suffix: str) -> Path:
    return prefix.with_name(f"{prefix.name}_{suffix}")


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def write_json(payload: Any, path: Path) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: Mapping[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(
    prefix: Path,
    config: Mapping[str, Any],
    files: Iterable[Path],
    *,
    wall_time: float,
    started_at: str,
    threads: int | None,
    failures: Iterable[tuple[int, str]] = (),
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """JSON manifest with the full config, content hashes and timing."""
    files = list(files)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "package_version": __version__,
        "command": config.get("command"),
        "config": dict(config),
        "config_sha256": config_hash(config),
        "files": {path.name: sha256_file(path) for path in files},
        "wall_time_s": wall_time,
        "started_at": started_at,
        "threads": threads,
        "failures": [{"mode": int(n), "error": msg} for n, msg in failures],
    }
    if extra:
        manifest["extra"] = dict(extra)
    return write_json(manifest, artifact_path(prefix, "manifest.json"))
