import numpy as np
import pytest

from twolayer import make_grid


@pytest.fixture
def grid1():
    return make_grid(1)


@pytest.fixture
def grid2():
    return make_grid(2, points=[32, 32])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def banded(grid, rng, kmax=6):
    """Smooth real random field with modes up to ``kmax`` (in units of 2*pi/L)."""
    coeffs = np.zeros(grid.spectral_shape, dtype=complex)
    n = grid.kabs * (grid.lengths[0] / (2 * np.pi))
    band = (n > 0) & (n <= kmax) & ~grid.nyquist
    noise = rng.normal(size=coeffs.shape) + 1j * rng.normal(size=coeffs.shape)
    coeffs[band] = noise[band]
    return grid.scalar(grid.ifft(coeffs))
