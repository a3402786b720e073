import math

import mpmath
import numpy as np
import pytest

from py_xx_dephasing.model import (
    ChainParams,
    DiagonalInitialState,
    ModelError,
    mode_arrays,
)
from py_xx_dephasing.observables import profile_variance
from py_xx_dephasing.propagate import contour_modes, invert_modes
from py_xx_dephasing.thermo import (
    KernelPoleError,
    ThermoKernel,
    density_longtime,
    density_profile,
    density_shorttime,
    density_thermo,
    f_telegrapher,
    f_thermo,
    gl0_thermo,
    offdiag_ballistic,
    offdiag_diffusive,
    offdiag_longtime,
    offdiag_thermo,
    thermo_kernel,
    variance_delta,
)


@pytest.fixture
def chain():
    return ChainParams(L=256, J=1.0, gamma=0.5)


def _signed(n):
    return np.mod(np.arange(n) + n // 2, n) - n // 2


def test_exact_kernel_forms(chain):
    s = np.array([0.3 + 0.2j, 2.0 - 1.0j])
    q = 1.1
    assert np.allclose(f_thermo(s, q, chain), gl0_thermo(s, q, 0, chain))
    clean = ChainParams(L=8, gamma=0.0)
    omega = 8.0 * math.sin(0.55)
    assert np.allclose(f_thermo(s, q, clean), 1 / np.sqrt(s * s + omega**2))
    mp_value = f_thermo(mpmath.mpc(0.3, 0.2), q, chain)
    assert complex(mp_value) == pytest.approx(complex(f_thermo(s[0], q, chain)))


def test_kernel_validation(chain):
    with pytest.raises(ModelError):
        ThermoKernel("exact-ish", chain)
    with pytest.raises(ModelError):
        thermo_kernel("telegrapher", chain, l=1)
    with pytest.raises(ModelError):
        thermo_kernel("diffusive_offdiag", ChainParams(L=8))
    with pytest.raises(ModelError):
        thermo_kernel("exact", chain, l=-1)


def test_kernel_frequency_bounds(chain):
    assert thermo_kernel("exact", chain).omega_max == 8.0
    assert thermo_kernel("ballistic_offdiag", chain, 2).omega_max == 8.0
    assert thermo_kernel("diffusive_offdiag", chain, 1).omega_max == 0.0
    assert thermo_kernel("telegrapher", chain).omega_max == pytest.approx(
        math.sqrt(8.0) * math.pi
    )


def test_telegrapher_kernel(chain):
    s = 0.7 + 0.1j
    q = 0.4
    expected = (s + 2.0) / (s * s + 2.0 * s + 8.0 * q * q)
    assert f_telegrapher(s, q, chain) == pytest.approx(expected)
    # q is folded into [-pi, pi)
    assert f_telegrapher(s, q + 2.0 * np.pi, chain) == pytest.approx(expected)
    with pytest.raises(KernelPoleError):
        f_telegrapher(0.0, 0.0, chain)


def test_shift_identity_talbot_against_damped_contour():
    p = ChainParams(L=64, J=1.0, gamma=0.3)
    _, q, omega = mode_arrays(p.L, p.J)
    kernel = thermo_kernel("exact", p)
    talbot = invert_modes(kernel, 1.0, q, omega_max=kernel.omega_max)
    contour = contour_modes(1.0, omega, p.gamma)
    assert np.allclose(talbot.real, contour, atol=1e-8)


def test_clean_chain_profile_is_bessel_squared():
    p = ChainParams(L=256, J=1.0, gamma=0.0)
    expected = density_shorttime(_signed(256), 1.0, p)
    for method in ("contour", "talbot"):
        profile = density_profile(1.0, None, p, method, nq=256)
        assert np.allclose(profile, expected, atol=1e-8)


def test_density_methods_agree(chain):
    talbot = density_profile(1.0, None, chain, "talbot", nq=256)
    contour = density_profile(1.0, None, chain, "contour", nq=256)
    assert np.allclose(talbot, contour, atol=1e-7)
    assert contour.sum() == pytest.approx(1.0, abs=1e-12)


def test_density_profile_at_time_zero(chain):
    profile = density_profile(0.0, None, chain, "contour", nq=64)
    assert profile[0] == 1.0
    assert np.count_nonzero(profile) == 1
    wall = DiagonalInitialState.domain_wall(16)
    assert np.array_equal(density_profile(0.0, wall, chain), wall.c)
    with pytest.raises(ModelError):
        density_profile(-1.0, None, chain)
    with pytest.raises(ModelError):
        density_profile(1.0, None, chain, "laplace")


def test_density_thermo_picks_sites(chain):
    values = density_thermo([-3, 3, 0], 2.0, None, chain, "contour", nq=256)
    assert values[0] == pytest.approx(values[1], abs=1e-12)
    scalar = density_thermo(0, 2.0, None, chain, "contour", nq=256)
    assert scalar == pytest.approx(values[2])


def test_delta_variance_law(chain):
    profile = density_profile(1.0, None, chain, "contour", nq=512)
    variance = profile_variance(-profile, "delta", site=0)
    assert variance == pytest.approx(variance_delta(1.0, chain), rel=1e-6)


def test_variance_limits():
    clean = ChainParams(L=8, J=1.5)
    assert variance_delta(2.0, clean) == pytest.approx(8.0 * 1.5**2 * 4.0)
    p = ChainParams(L=8, J=1.0, gamma=0.5)
    t = np.array([1e-4, 1e3])
    values = variance_delta(t, p)
    assert values[0] == pytest.approx(8.0 * t[0] ** 2, rel=1e-3)
    assert values[1] == pytest.approx(2.0 * p.diffusion_constant * t[1] - 4.0)


def test_shorttime_and_longtime_profiles(chain):
    assert density_shorttime(0, 0.0, chain) == 1.0
    assert density_shorttime(2, 0.0, chain) == 0.0
    x = np.arange(-200, 201)
    assert density_longtime(x, 2.0, chain).sum() == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ModelError):
        density_longtime(x, 2.0, ChainParams(L=8))
    with pytest.raises(ModelError):
        density_longtime(x, 0.0, chain)


def test_offdiagonal_order_zero_is_the_density(chain):
    x = np.arange(-5, 6)
    band = offdiag_thermo(x, 0, 1.0, None, chain, nq=256)
    density = density_thermo(x, 1.0, None, chain, nq=256)
    assert np.allclose(band.real, density, atol=1e-12)


def test_ballistic_kernel_is_exact_without_dephasing():
    p = ChainParams(L=128, J=1.0, gamma=0.0)
    x = np.arange(-6, 7)
    exact = offdiag_thermo(x, 1, 0.8, None, p, nq=128)
    ballistic = offdiag_ballistic(x, 1, 0.8, p, nq=128)
    assert np.allclose(exact, ballistic, atol=1e-12)


@pytest.mark.parametrize("l", [1, 2])
def test_diffusive_kernel_approaches_hermite_law(chain, l):
    t = 200.0
    x = np.arange(-150, 151)
    numeric = offdiag_diffusive(x, l, t, chain, nq=4096)
    asymptotic = offdiag_longtime(x, l, t, chain)
    scale = np.max(np.abs(asymptotic))
    assert np.max(np.abs(numeric - asymptotic)) < 2e-2 * scale


def test_longtime_offdiagonal_phases(chain):
    odd = offdiag_longtime(np.arange(-10, 10), 1, 50.0, chain)
    even = offdiag_longtime(np.arange(-10, 10), 2, 50.0, chain)
    assert np.allclose(odd.real, 0.0)
    assert np.allclose(even.imag, 0.0)
    with pytest.raises(ModelError):
        offdiag_longtime(0, -1, 1.0, chain)
