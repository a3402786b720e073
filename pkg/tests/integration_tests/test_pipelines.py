import numpy as np
import pytest

from py_xx_dephasing.ed_oracle import evolve_direct, evolve_modes
from py_xx_dephasing.model import ChainParams, CorrelationMatrix, DiagonalInitialState
from py_xx_dephasing.observables import (
    band_decay,
    fit_diffusion,
    fit_powerlaw,
    magnetization_profile,
    profile_variance,
)
from py_xx_dephasing.propagate import transfer_correlations, transfer_density
from py_xx_dephasing.thermo import density_profile, variance_delta


@pytest.mark.slow
def test_transfer_matches_direct_integration_on_long_chain():
    p = ChainParams(L=64, J=1.0, gamma=0.5)
    init = DiagonalInitialState.domain_wall(p.L)
    times = [0.5, 2.0]
    direct = evolve_direct(CorrelationMatrix.from_initial(init), p, times)
    transfer = transfer_correlations(times, init, p, l_max=3, workers=2)
    for ref, got in zip(direct.states, transfer.states):
        for l in range(4):
            assert np.max(np.abs(ref.diagonal(l) - got.diagonal(l))) < 1e-6


def test_spectral_and_transfer_magnetization_agree():
    p = ChainParams(L=32, J=1.0, gamma=0.2)
    init = DiagonalInitialState.domain_wall(p.L)
    spectral = evolve_modes(init, p, [1.5], l_max=1)
    transfer = transfer_correlations([1.5], init, p, l_max=1, workers=2)
    m_spectral = magnetization_profile(spectral.states[0])
    m_transfer = magnetization_profile(transfer.states[0])
    assert np.max(np.abs(m_spectral - m_transfer)) < 1e-8


def test_finite_chain_density_matches_thermodynamic_kernel_before_wrap():
    p = ChainParams(L=256, J=1.0, gamma=0.3)
    init = DiagonalInitialState.delta(p.L, site=128)
    finite = transfer_density(1.0, init, p, workers=2)
    thermo = density_profile(1.0, init, p, "talbot", workers=2)
    assert np.max(np.abs(finite - thermo)) < 1e-8
    assert finite.sum() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("gamma", [0.1, 1.0])
def test_diffusion_constant_from_delta_release(gamma):
    p = ChainParams(L=4096, J=1.0, gamma=gamma)
    times = np.linspace(10.0, 30.0, 5) / gamma
    profiles = [
        (t, -density_profile(t, None, p, "contour", nq=4096, workers=2))
        for t in times
    ]
    fit = fit_diffusion(profiles, "delta", site=0)
    assert fit.D == pytest.approx(2.0 * p.J**2 / gamma, rel=0.05)


@pytest.fixture(scope="module")
def released_bands():
    p = ChainParams(L=200, J=1.0, gamma=0.5)
    release = 100
    init = DiagonalInitialState.delta(p.L, site=release)
    times = np.logspace(np.log10(6.0), np.log10(40.0), 12)
    result = evolve_modes(init, p, times, l_max=4, workers=2)
    bands = {l: [C.diagonal(l) for C in result.states] for l in range(1, 5)}
    return times, bands, release


@pytest.mark.parametrize("l, expected", [(1, -1.5), (2, -1.5), (3, -2.5), (4, -2.5)])
def test_offdiagonal_centre_decay_exponents(released_bands, l, expected):
    times, bands, release = released_bands
    decay = band_decay(bands[l], l, "center", release=release)
    fit = fit_powerlaw(times, decay)
    assert fit.exponent == pytest.approx(expected, rel=0.1)


@pytest.mark.parametrize("l, centre", [(1, -1.5), (3, -2.5)])
def test_odd_offdiagonal_maximum_decays_slower(released_bands, l, centre):
    times, bands, _ = released_bands
    peak = fit_powerlaw(times, band_decay(bands[l], l, "max"))
    # half a power of t slower than the centre site
    assert peak.exponent > centre + 0.25
    assert peak.exponent == pytest.approx(centre + 0.5, abs=0.15)


@pytest.mark.slow
def test_megasite_density_keeps_norm_and_variance():
    p = ChainParams(L=1_000_000, J=1.0, gamma=0.1)
    site = p.L // 2
    init = DiagonalInitialState.delta(p.L, site=site)
    density = transfer_density(100.0, init, p)
    assert density.sum() == pytest.approx(1.0, abs=1e-8)
    assert profile_variance(-density, "delta", site) == pytest.approx(
        variance_delta(100.0, p), rel=1e-6
    )
