import numpy as np
import pytest

from py_xx_dephasing.model import ChainParams, DiagonalInitialState


@pytest.fixture
def small_chain():
    return ChainParams(L=8, J=1.0, gamma=0.3)


@pytest.fixture
def delta_state(small_chain):
    return DiagonalInitialState.delta(small_chain.L, site=0)


@pytest.fixture
def wall_state(small_chain):
    return DiagonalInitialState.domain_wall(small_chain.L)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
