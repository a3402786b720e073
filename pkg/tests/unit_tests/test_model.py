import numpy as np
import pytest

from py_xx_dephasing.model import (
    ChainParams,
    CorrelationMatrix,
    DiagonalInitialState,
    ModelError,
    assemble_correlations,
    band_from_modes,
    corner_phase,
    dispersion,
    mode_arrays,
    momentum_transform,
    representative_positions,
    synthesize,
    unique_mode_indices,
)


@pytest.mark.parametrize(
    "kwargs",
    [{"L": 1}, {"L": 2.5}, {"L": 8, "J": 0.0}, {"L": 8, "gamma": -0.1}],
)
def test_chain_params_rejects_invalid(kwargs):
    with pytest.raises(ModelError):
        ChainParams(**kwargs)


def test_diffusion_constant():
    assert ChainParams(L=8, J=1.5, gamma=0.5).diffusion_constant == pytest.approx(9.0)
    with pytest.raises(ModelError):
        ChainParams(L=8).diffusion_constant


def test_dispersion_exact_zero_on_full_turn():
    assert dispersion(2.0 * np.pi, 1.0) == 0.0
    assert dispersion(np.pi, 0.5) == pytest.approx(4.0)
    _, q, omega = mode_arrays(6)
    assert q[-1] == pytest.approx(2.0 * np.pi)
    assert omega[-1] == 0.0
    assert np.all(omega[:-1] > 0)


def test_transform_and_synthesis_are_inverse(rng):
    c = rng.uniform(-1.0, 1.0, size=12)
    assert np.allclose(synthesize(momentum_transform(c)).real, c, atol=1e-14)
    # a delta at the origin has a flat spectrum
    delta = np.zeros(12)
    delta[0] = 1.0
    assert np.allclose(momentum_transform(delta), 1.0)


def test_unique_modes_pair_n_with_its_mirror():
    canonical, distinct = unique_mode_indices(8)
    assert canonical.tolist() == [1, 2, 3, 4, 3, 2, 1, 0]
    assert distinct.tolist() == [0, 1, 2, 3, 4]
    assert representative_positions(distinct, 8).tolist() == [7, 0, 1, 2, 3]


def test_corner_phase_on_grid():
    L = 6
    for n in range(1, L + 1):
        q = 2.0 * np.pi * n / L
        # (-i)^6 = -1
        assert corner_phase(q, L) == pytest.approx(-((-1) ** n))
    assert corner_phase(2.0 * np.pi / 4, 4) == pytest.approx(-1.0)


def test_domain_wall_spectrum_matches_transform():
    state = DiagonalInitialState.domain_wall(10)
    assert state.c[:5].tolist() == [-1.0] * 5
    assert state.c[5:].tolist() == [1.0] * 5
    assert np.allclose(state.cq, momentum_transform(state.c), atol=1e-12)
    assert np.allclose(state.cq[1::2], 0.0)


def test_initial_state_validation():
    with pytest.raises(ModelError):
        DiagonalInitialState.from_values([0.0, 1.5, 0.0])
    with pytest.raises(ModelError):
        DiagonalInitialState.from_values([0.0, np.nan])
    with pytest.raises(ModelError):
        DiagonalInitialState.domain_wall(7)
    with pytest.raises(ModelError):
        DiagonalInitialState(np.zeros(4), cq=np.ones(4))


def test_initial_state_is_read_only(delta_state):
    with pytest.raises(ValueError):
        delta_state.c[0] = 0.5


def test_initial_state_from_csv(tmp_path):
    path = tmp_path / "state.csv"
    path.write_text("c\n1\n0\n-1\n0\n", encoding="utf-8")
    state = DiagonalInitialState.from_csv(path)
    assert state.tag == "custom-csv"
    assert state.c.tolist() == [1.0, 0.0, -1.0, 0.0]

    bad = tmp_path / "bad.csv"
    bad.write_text("value\n1\n0\n", encoding="utf-8")
    with pytest.raises(ModelError, match="'c' column"):
        DiagonalInitialState.from_csv(bad)
    with pytest.raises(ModelError):
        DiagonalInitialState.from_csv(tmp_path / "missing.csv")


def test_correlation_matrix_helpers(wall_state):
    C = CorrelationMatrix.from_initial(wall_state)
    assert C.L == 8
    assert C.trace() == pytest.approx(0.0)
    assert C.hermiticity_error() == 0.0
    assert C.structure_error() == 0.0
    assert np.allclose(C.diagonal(0), wall_state.c)
    assert np.allclose(C.diagonal(3), 0.0)
    frame = C.to_frame()
    assert list(frame.columns) == ["x", "y", "re", "im"]
    assert len(frame) == 64


def test_correlation_matrix_rejects_bad_shapes():
    with pytest.raises(ModelError):
        CorrelationMatrix(np.zeros((3, 4)))
    with pytest.raises(ModelError):
        CorrelationMatrix(np.zeros((3, 3)), time=-1.0)


def test_assemble_diagonal_only(wall_state):
    C = assemble_correlations({0: wall_state.cq}, 8, 0.0)
    assert np.allclose(C.entries, np.diag(wall_state.c), atol=1e-14)
    assert C.l_max == 0
    assert C.truncated


def test_assemble_checks_inputs(wall_state):
    with pytest.raises(ModelError, match="g_0"):
        assemble_correlations({1: wall_state.cq}, 8, 0.0)
    with pytest.raises(ModelError, match="missing"):
        assemble_correlations({0: wall_state.cq, 2: wall_state.cq}, 8, 0.0)
    with pytest.raises(ModelError, match="limited"):
        assemble_correlations({0: wall_state.cq}, 8, 0.0, dense_max_L=4)


def test_band_from_modes_places_hermitian_partner(rng):
    L = 8
    g1 = rng.normal(size=L) + 1j * rng.normal(size=L)
    g = {0: np.ones(L), 1: g1}
    C = assemble_correlations(g, L, 0.5)
    band = band_from_modes(g1, 1)
    assert np.allclose(C.diagonal(1), band)
    # C_{x-1,x} = conj(C_{x,x-1})
    assert np.allclose(C.diagonal(-1), np.roll(band.conj(), 1))
