import numpy as np
import pytest

from betaspec.core.config import get_settings
from betaspec.models.domain.experiment import ArmaModel
from betaspec.services import filterbank_service, spectra_service

ARMA_AR = [0.5, -0.42, 0.602, -0.0425, 0.1192]
ARMA_MA = [1.0, 1.1, 0.08, -0.15]


@pytest.fixture(autouse=True)
def clear_settings_cache():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n, condition=10.0, complex_valued=False):
    """Random Hermitian PD matrix with eigenvalues spread over [1, condition]"""
    X = rng.standard_normal((n, n))
    if complex_valued:
        X = X + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(X)
    eigenvalues = np.geomspace(1.0, condition, n)
    return (Q * eigenvalues) @ Q.conj().T


def random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return 0.5 * (X + X.T)


def smooth_spectrum(rng, grid, m, order=2, floor=0.5):
    """Coercive trigonometric-polynomial spectrum C0 + sum_k (C_k e^{jk theta} + C_k^T e^{-jk theta})"""
    coefficients = [0.3 * rng.standard_normal((m, m)) for _ in range(order)]

    def fn(theta):
        values = np.zeros((len(theta), m, m), dtype=complex)
        for k, C in enumerate(coefficients, start=1):
            term = np.exp(1j * k * theta)[:, None, None] * C
            values += term + np.conj(np.swapaxes(term, -1, -2))
        shift = floor - np.min(np.linalg.eigvalsh(values))
        return values + shift * np.eye(m)

    return spectra_service.spectrum_from_function(fn, grid)


@pytest.fixture
def grid():
    return spectra_service.make_grid(512)


@pytest.fixture
def arma_model():
    return ArmaModel(ar=ARMA_AR, ma=ARMA_MA)


@pytest.fixture
def ce_bank(grid):
    return filterbank_service.covariance_extension_bank(6, 1, grid)


@pytest.fixture
def bivariate_bank(grid):
    A = np.diag([0.0, 0.8, -0.8, 0.5, -0.3])
    B = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    return filterbank_service.make_filterbank(A, B, grid)
