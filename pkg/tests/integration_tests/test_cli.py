import numpy as np
import pytest


def test_evolve_with_ed(run_cli, read_artifact):
    status, prefix = run_cli(
        "evolve",
        "--L",
        "8",
        "--gamma",
        "0.3",
        "--initial",
        "domain-wall",
        "--t",
        "0",
        "0.5",
        "1",
    )
    assert status == 0
    trajectory = read_artifact(prefix, "trajectory.csv")
    assert list(trajectory.columns) == ["t", "x", "m", "j"]
    assert len(trajectory) == 24
    final = read_artifact(prefix, "final_matrix.json")
    assert final["L"] == 8
    assert final["t"] == 1.0
    manifest = read_artifact(prefix, "manifest.json")
    assert manifest["command"] == "evolve"
    assert set(manifest["files"]) == {
        "run_trajectory.csv",
        "run_final_matrix.csv",
        "run_final_matrix.json",
    }
    assert manifest["extra"]["max_hermiticity_error"] < 1e-9
    assert manifest["extra"]["max_trace_drift"] < 1e-9


def test_evolve_methods_agree(run_cli, read_artifact):
    args = ("evolve", "--L", "8", "--gamma", "0.3", "--t", "0.5")
    ed_status, ed_prefix = run_cli(*args, name="ed")
    tr_status, tr_prefix = run_cli(*args, "--method", "transfer-talbot", name="tr")
    assert ed_status == tr_status == 0
    ed = read_artifact(ed_prefix, "final_matrix.csv")
    transfer = read_artifact(tr_prefix, "final_matrix.csv")
    assert np.allclose(ed["re"], transfer["re"], atol=1e-7)
    assert np.allclose(ed["im"], transfer["im"], atol=1e-7)


def test_compare_passes_and_fails_on_tolerance(run_cli, read_artifact):
    args = ("compare", "--preset", "oracle", "--L", "16", "--t", "0.5", "1.0")
    status, prefix = run_cli(*args)
    assert status == 0
    table = read_artifact(prefix, "compare.csv")
    assert list(table.columns) == ["t", "l", "max_abs_diff"]
    assert sorted(table["l"].unique()) == [0, 1, 2, 3, 4]
    assert table["max_abs_diff"].max() < 1e-6

    status, prefix = run_cli(*args, "--tolerance", "1e-30", name="strict")
    assert status == 3
    manifest = read_artifact(prefix, "manifest.json")
    assert manifest["extra"]["tolerance"] == 1e-30
    assert "run_compare.csv" not in manifest["files"]
    assert "strict_compare.csv" in manifest["files"]


def test_density_methods(run_cli, read_artifact):
    common = ("density", "--L", "64", "--gamma", "0.5", "--site", "32", "--t", "1.0")
    _, ed = run_cli(*common, name="ed")
    _, talbot = run_cli(*common, "--method", "transfer-talbot", name="talbot")
    _, contour = run_cli(*common, "--method", "transfer-contour", name="contour")
    values = {
        name: read_artifact(prefix, "density.csv")["value_re"].to_numpy()
        for name, prefix in (("ed", ed), ("talbot", talbot), ("contour", contour))
    }
    assert np.allclose(values["ed"], values["talbot"], atol=1e-7)
    # the thermodynamic kernel is exact while the front stays inside the ring
    assert np.allclose(values["talbot"], values["contour"], atol=1e-7)


def test_density_asymptotic_with_window(run_cli, read_artifact):
    status, prefix = run_cli(
        "density",
        "--L",
        "200",
        "--gamma",
        "0.5",
        "--site",
        "100",
        "--method",
        "asymptotic",
        "--window",
        "10",
        "--t",
        "2.0",
        "--plot",
    )
    assert status == 0
    frame = read_artifact(prefix, "density.csv")
    assert set(frame["method"]) == {"shorttime", "longtime"}
    assert frame["x"].min() == 90
    assert frame["x"].max() == 110
    assert prefix.with_name("run_density.fig2.gp").exists()


def test_offdiag_decay_table(run_cli, read_artifact):
    status, prefix = run_cli(
        "offdiag",
        "--L",
        "24",
        "--gamma",
        "0.5",
        "--site",
        "12",
        "--lmax",
        "2",
        "--t",
        "1",
        "2",
        "3",
        "4",
        "5",
        "6",
    )
    assert status == 0
    band = read_artifact(prefix, "offdiag_l1.csv")
    assert list(band.columns) == ["t", "x", "value_re", "value_im", "method"]
    decay = read_artifact(prefix, "decay.csv")
    assert list(decay.columns) == ["t", "l", "center", "max"]
    assert len(decay) == 12
    assert (decay["max"] >= decay["center"]).all()
    fits = read_artifact(prefix, "manifest.json")["extra"]["fits"]
    assert set(fits) == {"1", "2"}
    assert fits["1"]["expected_center"] == -1.5
    assert fits["2"]["expected_center"] == -1.5
    assert "exponent" in fits["1"]["max"]


def test_beta_series(run_cli, read_artifact):
    status, prefix = run_cli(
        "beta",
        "--L",
        "16",
        "--gamma",
        "0.2",
        "--initial",
        "domain-wall",
        "--t-start",
        "0.1",
        "--t-stop",
        "1.0",
        "--t-count",
        "6",
        "--plot",
    )
    assert status == 0
    series = read_artifact(prefix, "beta.csv")
    assert list(series.columns) == ["t", "M", "beta"]
    assert (series["M"] > 0).all()
    assert series["beta"].notna().all()
    assert series["t"].iloc[-1] == pytest.approx(1.0)
    payload = read_artifact(prefix, "beta.json")
    assert payload["meta"]["initial"] == "domain-wall"
    assert prefix.with_name("run_beta.fig3a.gp").exists()
    assert prefix.with_name("run_beta.fig3b.gp").exists()


def test_resolvent_dump(run_cli, read_artifact):
    status, prefix = run_cli(
        "resolvent-dump", "--L", "8", "--gamma", "0.2", "--set", "s_count=3"
    )
    assert status == 0
    frame = read_artifact(prefix, "resolvent.csv")
    assert list(frame.columns) == ["s_re", "s_im", "q", "g00_re", "g00_im"]
    assert len(frame) == 24
    assert np.isfinite(frame[["g00_re", "g00_im"]].to_numpy()).all()


def test_bench_rows(run_cli, read_artifact):
    status, prefix = run_cli(
        "bench",
        "--gamma",
        "0.5",
        "--t",
        "0.5",
        "--bench-sizes",
        "64",
        "128",
        "--set",
        "bench_dense_sizes=4,6",
    )
    assert status == 0
    frame = read_artifact(prefix, "bench.csv")
    assert list(frame.columns) == ["L", "method", "wall_s", "peak_mb", "per_mode_us"]
    assert frame["method"].tolist() == ["transfer-talbot"] * 2 + ["dense"] * 2
    extra = read_artifact(prefix, "manifest.json")["extra"]
    assert "transfer-talbot_exponent" in extra


def test_configuration_errors_exit_with_code_2(run_cli, read_artifact, tmp_path):
    status, _ = run_cli("density", "--L", "9", "--method", "transfer-talbot")
    assert status == 2
    status, prefix = run_cli(
        "density",
        "--L",
        "8",
        "--initial",
        "custom-csv",
        "--initial-csv",
        str(tmp_path / "missing.csv"),
    )
    assert status == 2
    manifest = read_artifact(prefix, "manifest.json")
    assert manifest["files"] == {}


def test_bench_budget_overrun_exits_with_code_3(run_cli, read_artifact):
    status, prefix = run_cli(
        "bench",
        "--gamma",
        "0.5",
        "--t",
        "0.5",
        "--bench-sizes",
        "64",
        "128",
        "--set",
        "bench_dense_sizes=4",
        "--set",
        "bench_budget_s=1e-9",
    )
    assert status == 3
    assert read_artifact(prefix, "bench.csv")["L"].tolist() == [64, 128, 4]
    extra = read_artifact(prefix, "manifest.json")["extra"]
    assert extra["over_budget"] == [64, 128]
    assert extra["budget_s"] == 1e-9


@pytest.mark.slow
def test_beta_crossover_from_ballistic_to_diffusive(run_cli, read_artifact):
    status, prefix = run_cli(
        "beta",
        "--L",
        "1e5",
        "--gamma",
        "0.01",
        "--initial",
        "domain-wall",
        "--method",
        "transfer-talbot",
        "--gamma-t",
        "--t",
        *(
            "1e-4 3e-4 1e-3 2e-3 4e-3 1e-2 3e-2 0.1 0.3 1 3 6 10 15 20 25 30 40"
        ).split(),
    )
    assert status == 0
    series = read_artifact(prefix, "beta.csv")
    gamma_t = series["t"] * 0.01
    early = series.loc[(gamma_t >= 1e-3) & (gamma_t <= 1e-2), "beta"]
    late = series.loc[(gamma_t > 9.99) & (gamma_t < 30.01), "beta"]
    assert early.max() >= 0.9
    assert late.size == 5
    assert late.between(0.45, 0.55).all()
