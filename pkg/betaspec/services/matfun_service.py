"""Matrix functions of Hermitian matrices and their Frechet derivatives.

Every function accepts a single m x m matrix or a stack of shape (..., m, m)
and works through one batched eigendecomposition. Frechet derivatives use the
eigenbasis (Daleckii-Krein) form L = U (F o (U* D U)) U*, where F holds the
first divided differences of the scalar function at the eigenvalues.
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from betaspec.core.config import get_settings
from betaspec.core.exceptions import DimensionError, NotPositiveDefinite
from betaspec.models.domain.matrices import SpectralDecomposition

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]


def _ct(X: np.ndarray) -> np.ndarray:
    return np.swapaxes(X.conj(), -1, -2)


def hermitian_part(X: np.ndarray) -> np.ndarray:
    """(X + X*)/2; real input stays real"""
    X = np.asarray(X)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {X.shape}")
    return 0.5 * (X + _ct(X))


def eigh_descending(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues descending, eigenvector phases fixed by the first significant entry"""
    d, U = np.linalg.eigh(hermitian_part(X))
    d = d[..., ::-1]
    U = U[..., ::-1]
    magnitude = np.abs(U)
    significant = magnitude > 1e-12 * magnitude.max(axis=-2, keepdims=True)
    first = np.argmax(significant, axis=-2)
    pivot = np.take_along_axis(U, first[..., None, :], axis=-2)
    phase = pivot / np.abs(pivot)
    return d, U * phase.conj()


def check_eigenvalues(d: np.ndarray, eig_floor: Optional[float] = None) -> None:
    if eig_floor is None:
        eig_floor = get_settings().EIG_FLOOR
    d = d.reshape(-1, d.shape[-1])
    bad = np.flatnonzero((d[:, 0] <= 0.0) | (d[:, -1] <= eig_floor * d[:, 0]))
    if bad.size:
        index = int(bad[0])
        raise NotPositiveDefinite(
            f"matrix is not positive definite: eigenvalues {d[index]}",
            index=index if d.shape[0] > 1 else None,
        )


def _apply(d: np.ndarray, U: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = (U * values[..., None, :]) @ _ct(U)
    return hermitian_part(out)


def spectral_decomposition(X: np.ndarray) -> SpectralDecomposition:
    """Eigendecomposition with eigenvalues sorted descending

    Args:
        X: Hermitian matrix or stack of matrices

    Returns:
        SpectralDecomposition with deterministic eigenvector phases
    """
    d, U = eigh_descending(X)
    return SpectralDecomposition(U=U, d=d)


def is_positive_definite(X: np.ndarray, eig_floor: Optional[float] = None) -> bool:
    try:
        check_eigenvalues(eigh_descending(X)[0], eig_floor)
    except NotPositiveDefinite:
        return False
    return True


def min_eigenvalue(X: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(hermitian_part(X))[..., 0]


def matrix_function(X: np.ndarray, f: ScalarFunction, positive: bool = True) -> np.ndarray:
    """Apply a scalar function to the eigenvalues of X"""
    d, U = eigh_descending(X)
    if positive:
        check_eigenvalues(d)
    return _apply(d, U, f(d))


def herm_power(X: np.ndarray, c: float) -> np.ndarray:
    """X^c for positive definite X"""
    return matrix_function(X, lambda d: d ** c)


def matrix_log(X: np.ndarray) -> np.ndarray:
    return matrix_function(X, np.log)


def matrix_exp(Y: np.ndarray) -> np.ndarray:
    return matrix_function(Y, np.exp, positive=False)


def gen_log_discrepancy(X: np.ndarray, Y: np.ndarray, c: float) -> np.ndarray:
    """Generalized logarithm discrepancy (X^{1-c} Y^{c-1} - I)/(1-c), log X - log Y at c = 1

    Args:
        X: positive definite matrix (or stack)
        Y: positive definite matrix (or stack) of the same shape
        c: deformation parameter

    Returns:
        Complex (in general non-Hermitian) matrix of the same shape
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch: {X.shape} vs {Y.shape}")
    if abs(1.0 - c) < get_settings().BETA_SINGULAR_TOL:
        return matrix_log(X) - matrix_log(Y)
    identity = np.broadcast_to(np.eye(X.shape[-1]), X.shape)
    return (herm_power(X, 1.0 - c) @ herm_power(Y, c - 1.0) - identity) / (1.0 - c)


def divided_differences(
    d: np.ndarray,
    f: ScalarFunction,
    df: ScalarFunction,
    tol: Optional[float] = None,
    scale_floor: float = 0.0,
) -> np.ndarray:
    """First divided differences F_ij = (f(d_i) - f(d_j)) / (d_i - d_j)

    Near-coincident eigenvalues, |d_i - d_j| <= tol * max(|d_i|, |d_j|, scale_floor),
    use the derivative at their midpoint, which keeps F symmetric.
    """
    if tol is None:
        tol = get_settings().DIVIDED_DIFFERENCE_TOL
    di = d[..., :, None]
    dj = d[..., None, :]
    diff = di - dj
    scale = np.maximum(np.maximum(np.abs(di), np.abs(dj)), scale_floor)
    close = np.abs(diff) <= tol * scale
    fd = f(d)
    numerator = fd[..., :, None] - fd[..., None, :]
    safe = np.where(close, 1.0, diff)
    return np.where(close, df(0.5 * (di + dj)), numerator / safe)


def frechet_derivative(
    X: np.ndarray,
    delta: np.ndarray,
    f: ScalarFunction,
    df: ScalarFunction,
    positive: bool = True,
    scale_floor: float = 0.0,
) -> np.ndarray:
    """Frechet derivative of X -> f(X) in direction delta"""
    d, U = eigh_descending(X)
    if positive:
        check_eigenvalues(d)
    F = divided_differences(d, f, df, scale_floor=scale_floor)
    rotated = _ct(U) @ np.asarray(delta) @ U
    return hermitian_part(U @ (F * rotated) @ _ct(U))


def frechet_power(X: np.ndarray, c: float, delta: np.ndarray) -> np.ndarray:
    """Derivative of X -> X^c at positive definite X in direction delta"""
    return frechet_derivative(X, delta, lambda t: t ** c, lambda t: c * t ** (c - 1.0))


def frechet_log(X: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return frechet_derivative(X, delta, np.log, lambda t: 1.0 / t)


def frechet_exp(Y: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return frechet_derivative(Y, delta, np.exp, np.exp, positive=False, scale_floor=1.0)


def inner(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Re tr(X* Y); equals tr(XY) for Hermitian arguments"""
    return np.real(np.sum(np.conj(X) * Y, axis=(-2, -1)))


def sym_to_vec(X: np.ndarray) -> np.ndarray:
    """Orthonormal coordinates of a real symmetric matrix (off-diagonal entries scaled by sqrt 2)"""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return X[..., rows, cols] * weights


def vec_to_sym(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of sym_to_vec"""
    v = np.asarray(v, dtype=float)
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, 1.0 / np.sqrt(2.0))
    X = np.zeros(v.shape[:-1] + (n, n))
    X[..., rows, cols] = v * weights
    X[..., cols, rows] = v * weights
    return X


def check_positive_definite(X: np.ndarray, eig_floor: Optional[float] = None) -> None:
    """Raise NotPositiveDefinite (with the flat stack index) unless every matrix is PD"""
    check_eigenvalues(eigh_descending(X)[0], eig_floor)
