import json

import pandas as pd
import pytest

from py_xx_dephasing.main import main

_ENV = ("XX_DEPHASING_THREADS", "XX_DEPHASING_OUTPUT", "XX_DEPHASING_DENSE_MAX_L")


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    for name in _ENV:
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def run_cli(tmp_path):
    """Run the CLI with its outputs under tmp_path; returns (status, prefix)."""

    def run(*argv, name="run"):
        prefix = tmp_path / name
        status = main([*argv, "--output", str(prefix), "--threads", "2"])
        return status, prefix

    return run


@pytest.fixture
def read_artifact():
    def read(prefix, suffix):
        path = prefix.with_name(f"{prefix.name}_{suffix}")
        if suffix.endswith(".json"):
            return json.loads(path.read_text(encoding="utf-8"))
        return pd.read_csv(path)

    return read
