import logging

import pandas as pd
import pytest

from py_xx_dephasing.runner import EXIT_NUMERICAL, EXIT_OK, _bench_status


def _frame(sizes, walls):
    return pd.DataFrame(
        {"L": sizes, "method": ["transfer-talbot"] * len(sizes), "wall_s": walls}
    )


def test_bench_over_budget_fails():
    extra = {"transfer-talbot_exponent": 1.0}
    status = _bench_status(_frame([10, 100], [1.0, 40.0]), extra, 30.0)
    assert status == EXIT_NUMERICAL
    assert extra["over_budget"] == [100]


def test_bench_quadratic_blowup_fails(caplog):
    extra = {"transfer-talbot_exponent": 2.6}
    with caplog.at_level(logging.ERROR, logger="py_xx_dephasing.runner"):
        status = _bench_status(_frame([10, 100], [1.0, 400.0]), extra, 1e4)
    assert status == EXIT_NUMERICAL
    assert extra["over_budget"] == []
    assert "exponent 2.60" in caplog.text


@pytest.mark.parametrize("exponent", [1.0, 2.0, None])
def test_bench_within_band_or_faster_passes(exponent, caplog):
    extra = {"transfer-talbot_exponent": exponent}
    with caplog.at_level(logging.WARNING, logger="py_xx_dephasing.runner"):
        status = _bench_status(_frame([10, 100], [1.0, 10.0]), extra, 1e4)
    assert status == EXIT_OK
    assert ("L log L" in caplog.text) == (exponent == 1.0)


def test_bench_short_points_are_not_judged():
    extra = {"transfer-talbot_exponent": 3.0}
    status = _bench_status(_frame([10, 100], [0.01, 0.2]), extra, 1e4)
    assert status == EXIT_OK
