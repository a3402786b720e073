import logging

import numpy as np
import pytest

from py_xx_dephasing.ed_oracle import evolve_direct
from py_xx_dephasing.laplace import TalbotConfig, contour_invert_batch
from py_xx_dephasing.model import (
    ChainParams,
    CorrelationMatrix,
    DiagonalInitialState,
    ModelError,
    dispersion,
    mode_arrays,
)
from py_xx_dephasing.observables import profile_variance
from py_xx_dephasing.propagate import (
    ModeInversionError,
    _finite_kernel,
    _picklable,
    contour_modes,
    diagonal_from_modes,
    invert_modes,
    offdiagonal_from_modes,
    ring_is_wide,
    transfer_correlations,
    transfer_density,
    transfer_offdiagonal,
)
from py_xx_dephasing.thermo import density_shorttime, variance_delta


def _decay_kernel(s, q):
    return 1 / (s + dispersion(q, 1.0))


@pytest.mark.parametrize("backend", ["vector", "mpmath"])
@pytest.mark.parametrize("symmetric", [True, False])
def test_invert_modes_exponential_decay(backend, symmetric):
    _, q, omega = mode_arrays(10)
    cfg = TalbotConfig(M=32, backend=backend)
    values = invert_modes(
        _decay_kernel, 1.0, q, cfg, omega_max=8.0, symmetric=symmetric, workers=2
    )
    assert values.shape == (10,)
    assert np.allclose(values, np.exp(-omega), atol=1e-8)


def test_invert_modes_restores_phase_of_order():
    _, q, _ = mode_arrays(6)
    values = invert_modes(
        lambda s, qn: 1j / (s + 1.0 + 0.0 * qn), 0.7, q, order=1, omega_max=0.0
    )
    assert np.allclose(values, 1j * np.exp(-0.7), atol=1e-9)


def test_invert_modes_rejects_non_positive_time():
    _, q, _ = mode_arrays(6)
    with pytest.raises(ModelError):
        invert_modes(_decay_kernel, 0.0, q, omega_max=8.0)


def test_invert_modes_collects_vector_failures():
    _, q, _ = mode_arrays(8)

    def broken(s, qn):
        return np.where(qn > 3.0, np.nan, 1 / (s + 1.0))

    with pytest.raises(ModeInversionError) as info:
        invert_modes(broken, 1.0, q, TalbotConfig(backend="vector"), omega_max=0.0)
    assert len(info.value.failures) == 5
    assert "inversion failed" in str(info.value)


def test_invert_modes_collects_mpmath_failures():
    _, q, _ = mode_arrays(8)

    def singular(s, qn):
        return 1 / (s - s)

    with pytest.raises(ModeInversionError) as info:
        invert_modes(
            singular, 1.0, q, TalbotConfig(M=16, backend="mpmath"), omega_max=0.0
        )
    modes = sorted(n for n, _ in info.value.failures)
    assert modes == [1, 2, 3, 4, 8]


def test_contour_modes_deduplicates():
    omegas = np.array([0.5, 3.0, 0.5, 8.0, 3.0])
    values = contour_modes(1.5, omegas, 0.25, workers=2)
    direct = contour_invert_batch(1.5, omegas, 0.25).real
    assert np.allclose(values, direct, atol=1e-13)
    assert values[0] == values[2]


def test_reduction_of_flat_spectrum_is_a_delta():
    diag = diagonal_from_modes(np.ones(8), np.ones(8))
    expected = np.zeros(8)
    expected[0] = 1.0
    assert np.allclose(diag, expected, atol=1e-14)
    assert np.allclose(offdiagonal_from_modes(np.zeros(8), np.ones(8), 2), 0.0)


def test_transfer_matches_direct_evolution(small_chain, delta_state):
    times = [0.0, 0.5, 1.5]
    C0 = CorrelationMatrix.from_initial(delta_state)
    direct = evolve_direct(C0, small_chain, times)
    transfer = transfer_correlations(times, delta_state, small_chain, workers=2)
    for a, b in zip(direct.states, transfer.states):
        assert np.allclose(a.entries, b.entries, atol=1e-7)


def test_transfer_banded_and_single_bands(small_chain, wall_state):
    result = transfer_correlations([0.4], wall_state, small_chain, l_max=1)
    C = result.states[0]
    assert C.l_max == 1
    band = transfer_offdiagonal(0.4, 1, wall_state, small_chain)
    assert np.allclose(C.diagonal(1), band, atol=1e-12)
    density = transfer_density(0.4, wall_state, small_chain)
    assert density.dtype == np.float64
    assert np.allclose(C.diagonal(0).real, density, atol=1e-12)


def test_transfer_at_time_zero(small_chain, wall_state):
    assert np.array_equal(transfer_density(0.0, wall_state, small_chain), wall_state.c)
    assert np.allclose(transfer_offdiagonal(0.0, 2, wall_state, small_chain), 0.0)


def test_transfer_input_checks(small_chain, wall_state):
    with pytest.raises(ModelError):
        transfer_offdiagonal(1.0, 5, wall_state, small_chain)
    with pytest.raises(ModelError):
        transfer_density(1.0, DiagonalInitialState.delta(6), small_chain)
    odd = ChainParams(L=7, gamma=0.1)
    with pytest.raises(ModelError):
        transfer_density(1.0, DiagonalInitialState.delta(7), odd)
    with pytest.raises(ModelError):
        transfer_correlations([1.0, 0.5], wall_state, small_chain)


def test_ring_is_wide():
    assert ring_is_wide(ChainParams(L=2048), 20.0)
    assert not ring_is_wide(ChainParams(L=2048), 130.0)
    assert not ring_is_wide(ChainParams(L=256, J=2.0), 20.0)


def test_multiprecision_modes_match_across_processes():
    p = ChainParams(L=16, J=1.0, gamma=0.2)
    _, q, _ = mode_arrays(p.L)
    cfg = TalbotConfig(M=32, backend="mpmath")
    kernel = _finite_kernel(p, 0)
    assert _picklable(kernel)
    serial = invert_modes(kernel, 0.8, q, cfg, omega_max=8.0, workers=1)
    pooled = invert_modes(kernel, 0.8, q, cfg, omega_max=8.0, workers=2)
    assert np.allclose(serial, pooled, rtol=0.0, atol=1e-14)


def test_unpicklable_kernels_stay_in_process():
    assert not _picklable(lambda s, qn: 1 / (s + 1.0))
    _, q, _ = mode_arrays(16)
    values = invert_modes(
        lambda s, qn: 1 / (s + 1.0),
        0.5,
        q,
        TalbotConfig(M=16, backend="mpmath"),
        omega_max=0.0,
        workers=4,
    )
    assert np.allclose(values, np.exp(-0.5), atol=1e-9)


def test_wide_ring_density_goes_through_the_contour(caplog):
    p = ChainParams(L=2048, J=1.0, gamma=0.0)
    site = p.L // 2
    init = DiagonalInitialState.delta(p.L, site=site)
    with caplog.at_level(logging.INFO, logger="py_xx_dephasing.propagate"):
        density = transfer_density(20.0, init, p, workers=2)
    assert "branch-cut contour" in caplog.text
    expected = density_shorttime(np.arange(p.L) - site, 20.0, p)
    assert np.max(np.abs(density - expected)) < 1e-10


def test_wide_ring_density_spreads_like_the_infinite_chain():
    p = ChainParams(L=2048, J=1.0, gamma=0.3)
    site = p.L // 2
    init = DiagonalInitialState.delta(p.L, site=site)
    density = transfer_density(20.0, init, p, workers=2)
    assert density.sum() == pytest.approx(1.0, abs=1e-10)
    assert profile_variance(-density, "delta", site) == pytest.approx(
        variance_delta(20.0, p), rel=1e-8
    )
