"""
pytest configuration: shared fixtures for the numerics and solver tests
"""

import pytest

from shefk.numerics.kernels import initial_condition
from shefk.numerics.paths import TimeGrid
from shefk.solvers.fk import SolverConfig


@pytest.fixture
def one():
    """u0 = 1"""
    return initial_condition('one')


@pytest.fixture
def indicator():
    """u0 = indicator of [0, 1]"""
    return initial_condition('indicator', a=0.0, b=1.0)


@pytest.fixture
def grid():
    """t = 1 with dt = 1e-3"""
    return TimeGrid.from_dt(1.0, 1e-3)


@pytest.fixture
def small_cfg():
    """Desk-sized solver configuration used by the fast tests"""
    return SolverConfig(t=1.0, x=0.0, K=6, n_paths=800, n_noise=40, dt=1e-2,
                        degree=4, seed=11, threads=2, batch_size=128)
