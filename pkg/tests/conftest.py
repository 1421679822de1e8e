import numpy as np
import pytest

from dplab.admissible import admissible_ensemble
from dplab.grid import UniformGrid
from dplab.stability import stability_certificate
from dplab.waves import sample_peakon


@pytest.fixture(scope="session")
def grid():
    return UniformGrid(30.0, 8192)


@pytest.fixture(scope="session")
def phi1(grid):
    return sample_peakon(grid, 1.0, 0.0)


@pytest.fixture(scope="session")
def ensemble(grid):
    """100 seeded admissible data near phi_1 with eps <= 0.05."""
    return admissible_ensemble(1.0, 100, eps_max=0.05, seed=1, grid=grid)


@pytest.fixture(scope="session")
def ensemble_reports(ensemble):
    return [stability_certificate(m.u, 1.0) for m in ensemble]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bandlimited(grid, rng, kmax=40, scale=1.0):
    """Random real trigonometric polynomial with modes |k| <= kmax."""
    coef = np.zeros(grid.N // 2 + 1, dtype=complex)
    coef[1 : kmax + 1] = rng.normal(size=kmax) + 1j * rng.normal(size=kmax)
    coef[0] = rng.normal()
    return scale * np.fft.irfft(coef, grid.N) * grid.N / kmax
