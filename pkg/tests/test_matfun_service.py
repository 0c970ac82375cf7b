import numpy as np
import pytest

from betaspec.core.exceptions import DimensionError, NotPositiveDefinite
from betaspec.services import matfun_service
from tests.conftest import random_spd, random_symmetric


def relative(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def central_difference(fn, X, delta, h=1e-5):
    return (fn(X + h * delta) - fn(X - h * delta)) / (2.0 * h)


def test_spectral_decomposition_reconstructs(rng):
    X = random_spd(rng, 4, complex_valued=True)
    decomposition = matfun_service.spectral_decomposition(X)
    assert np.all(np.diff(decomposition.d) <= 0.0)
    assert relative(decomposition.reconstruct(), X) < 1e-12
    U = decomposition.U
    assert np.linalg.norm(U.conj().T @ U - np.eye(4)) < 1e-12


def test_eigenvector_phases_are_deterministic(rng):
    X = random_spd(rng, 3, complex_valued=True)
    _, U1 = matfun_service.eigh_descending(X)
    _, U2 = matfun_service.eigh_descending(X.copy())
    assert np.array_equal(U1, U2)
    first = U1[np.argmax(np.abs(U1) > 1e-12, axis=0), np.arange(3)]
    assert np.allclose(first.imag, 0.0) and np.all(first.real > 0.0)


def test_herm_power_simple_cases():
    assert np.allclose(matfun_service.herm_power(np.eye(3), 0.5), np.eye(3), atol=1e-15)
    assert np.allclose(matfun_service.herm_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]), atol=1e-14)


def test_herm_power_matches_eigenvalue_oracle(rng):
    X = random_spd(rng, 4)
    w, V = np.linalg.eig(X)
    oracle = (V * w.real ** (-1.0 / 3.0)) @ np.linalg.inv(V)
    assert relative(matfun_service.herm_power(X, -1.0 / 3.0), oracle.real) < 1e-10


@pytest.mark.parametrize("a", [-1.0, 0.5, -0.5, 1.0 / 3.0, -1.0 / 3.0, 2.0])
@pytest.mark.parametrize("b", [-1.0, 0.5, 2.0])
def test_herm_power_composes(rng, a, b):
    X = random_spd(rng, 3)
    composed = matfun_service.herm_power(matfun_service.herm_power(X, a), b)
    assert relative(composed, matfun_service.herm_power(X, a * b)) < 1e-9


def test_herm_power_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        matfun_service.herm_power(np.diag([1.0, -1.0]), 0.5)
    with pytest.raises(NotPositiveDefinite):
        matfun_service.herm_power(np.diag([1.0, 1e-14]), 0.5)


def test_stack_error_names_index():
    stack = np.array([np.eye(2), np.eye(2), np.diag([1.0, -2.0])])
    with pytest.raises(NotPositiveDefinite) as excinfo:
        matfun_service.check_positive_definite(stack)
    assert excinfo.value.index == 2
    assert "grid index 2" in str(excinfo.value)


def test_non_square_input():
    with pytest.raises(DimensionError):
        matfun_service.hermitian_part(np.ones((2, 3)))


def test_log_exp_round_trip(rng):
    assert np.allclose(matfun_service.matrix_log(np.eye(3)), 0.0, atol=1e-15)
    assert np.allclose(matfun_service.matrix_exp(np.zeros((3, 3))), np.eye(3), atol=1e-15)
    X = random_spd(rng, 4, complex_valued=True)
    assert relative(matfun_service.matrix_exp(matfun_service.matrix_log(X)), X) < 1e-10


def test_gen_log_discrepancy(rng):
    X = random_spd(rng, 3)
    Y = random_spd(rng, 3)
    assert np.allclose(matfun_service.gen_log_discrepancy(X, X, 0.3), 0.0, atol=1e-12)
    near = matfun_service.gen_log_discrepancy(X, Y, 1.0 - 1e-6)
    limit = matfun_service.gen_log_discrepancy(X, Y, 1.0)
    assert np.linalg.norm(near - limit) < 1e-4
    x, y, c = 2.5, 0.7, -0.4
    scalar = matfun_service.gen_log_discrepancy(np.array([[x]]), np.array([[y]]), c)
    assert scalar[0, 0] == pytest.approx(((x / y) ** (1.0 - c) - 1.0) / (1.0 - c), rel=1e-12)


def test_gen_log_discrepancy_is_continuous_in_c(rng):
    X = random_spd(rng, 3, condition=4.0)
    Y = random_spd(rng, 3, condition=4.0)
    cs = np.arange(-2.0, 3.0, 1e-3)
    values = np.array([matfun_service.gen_log_discrepancy(X, Y, c) for c in cs])
    jumps = np.linalg.norm(np.diff(values, axis=0), axis=(-2, -1))
    assert np.max(jumps) < 1e-1


def test_frechet_power_at_identity(rng):
    delta = random_symmetric(rng, 3)
    assert np.allclose(matfun_service.frechet_power(np.eye(3), 0.7, delta), 0.7 * delta, atol=1e-12)


@pytest.mark.parametrize("c", [-2.0, -1.0 / 3.0, 0.5, 1.5])
def test_frechet_power_finite_difference(rng, c):
    X = random_spd(rng, 3, condition=5.0)
    delta = random_symmetric(rng, 3)
    analytic = matfun_service.frechet_power(X, c, delta)
    numeric = central_difference(lambda M: matfun_service.herm_power(M, c), X, delta)
    assert relative(analytic, numeric) < 1e-6


def test_frechet_power_trace_identity(rng):
    X = random_spd(rng, 4)
    delta = random_symmetric(rng, 4)
    lhs = np.trace(matfun_service.frechet_power(X, 0.5, delta))
    rhs = 0.5 * np.trace(matfun_service.herm_power(X, -0.5) @ delta)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_frechet_power_repeated_eigenvalues():
    X = np.diag([2.0, 2.0, 1.0])
    delta = np.ones((3, 3))
    result = matfun_service.frechet_power(X, -1.0, delta)
    expected = -np.linalg.inv(X) @ delta @ np.linalg.inv(X)
    assert np.allclose(result, expected, atol=1e-12)


def test_frechet_log_and_exp(rng):
    delta = random_symmetric(rng, 3)
    assert np.allclose(matfun_service.frechet_exp(np.zeros((3, 3)), delta), delta, atol=1e-12)
    assert np.allclose(matfun_service.frechet_log(np.eye(3), delta), delta, atol=1e-12)

    X = random_spd(rng, 3, condition=5.0)
    assert relative(
        matfun_service.frechet_log(X, delta),
        central_difference(matfun_service.matrix_log, X, delta),
    ) < 1e-6
    Y = random_symmetric(rng, 3)
    assert relative(
        matfun_service.frechet_exp(Y, delta),
        central_difference(matfun_service.matrix_exp, Y, delta),
    ) < 1e-6

    inverse_pair = matfun_service.frechet_exp(matfun_service.matrix_log(X), matfun_service.frechet_log(X, delta))
    assert np.linalg.norm(inverse_pair - delta) < 1e-8


def test_symmetric_coordinates_are_isometric(rng):
    X = random_symmetric(rng, 4)
    Y = random_symmetric(rng, 4)
    v = matfun_service.sym_to_vec(X)
    assert v.shape == (10,)
    assert np.dot(v, matfun_service.sym_to_vec(Y)) == pytest.approx(np.trace(X @ Y), rel=1e-12)
    assert np.allclose(matfun_service.vec_to_sym(v, 4), X, atol=1e-15)
