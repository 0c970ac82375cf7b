"""Filter banks G(z) = (zI - A)^{-1} B, the moment operator Gamma and Range Gamma."""
import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    DimensionError,
    NotInRangeGamma,
    NotReachable,
    RankDeficientB,
    UnstableA,
)
from betaspec.models.domain.filterbank import (
    BankDescription,
    CovarianceExtensionBankDescription,
    ExplicitBankDescription,
    FilterBank,
    Pole,
    PoleBankDescription,
    RangeGammaBasis,
)
from betaspec.models.domain.spectra import FrequencyGrid, SpectrumGrid
from betaspec.services import matfun_service, spectra_service

logger = logging.getLogger(__name__)


def _frequency_response(A: np.ndarray, B: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    z = np.exp(1j * grid.half_theta)
    n = A.shape[0]
    resolvent = z[:, None, None] * np.eye(n) - A
    half = np.linalg.solve(resolvent, np.broadcast_to(B, (len(z),) + B.shape).astype(complex))
    return spectra_service.mirror_half(half, grid)


def make_filterbank(
    A: np.ndarray,
    B: np.ndarray,
    grid: FrequencyGrid,
    stability_margin: Optional[float] = None,
) -> FilterBank:
    """
    Validate (A, B) and cache the frequency response on a grid

    Args:
        A: n x n real matrix with spectral radius < 1
        B: n x m real matrix of full column rank, n > m
        grid: frequency grid for the cached response
        stability_margin: spectral radius must stay below 1 - margin

    Returns:
        FilterBank

    Raises:
        DimensionError: shapes disagree or n <= m
        RankDeficientB, UnstableA, NotReachable
    """
    if stability_margin is None:
        stability_margin = get_settings().STABILITY_MARGIN
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError(f"incompatible shapes A {A.shape}, B {B.shape}")
    m = B.shape[1]
    if n <= m:
        raise DimensionError(f"filter bank needs n > m, got n={n}, m={m}")
    if np.linalg.matrix_rank(B) < m:
        raise RankDeficientB(f"B has rank {np.linalg.matrix_rank(B)} < {m}")
    radius = float(np.max(np.abs(np.linalg.eigvals(A))))
    if radius >= 1.0 - stability_margin:
        raise UnstableA(f"spectral radius of A is {radius:.12g}, must be < 1 - {stability_margin}")
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    reachability = np.hstack(blocks)
    rank = np.linalg.matrix_rank(reachability)
    if rank < n:
        raise NotReachable(f"reachability matrix has rank {rank} < {n}")
    logger.debug(f"Filter bank n={n} m={m} spectral radius={radius:.4f}")
    return FilterBank(A=A, B=B, grid=grid, response=_frequency_response(A, B, grid))


def on_grid(bank: FilterBank, grid: FrequencyGrid) -> FilterBank:
    """Same (A, B) with the response cached on another grid"""
    if grid.K == bank.grid.K:
        return bank
    return FilterBank(A=bank.A, B=bank.B, grid=grid, response=_frequency_response(bank.A, bank.B, grid))


# Declarative bank forms

def covariance_extension_bank(n: int, m: int, grid: FrequencyGrid) -> FilterBank:
    """Delay line x_{k+1} = A x_k + B y_k storing the last n samples (state dimension n*m)"""
    A = np.kron(np.eye(n, k=1), np.eye(m))
    e_n = np.zeros((n, 1))
    e_n[-1, 0] = 1.0
    B = np.kron(e_n, np.eye(m))
    return make_filterbank(A, B, grid)


def pole_bank_matrix(poles: Sequence[Pole]) -> np.ndarray:
    """Real block-diagonal A; complex poles become rotation-scaled 2 x 2 blocks"""
    blocks = []
    for pole in poles:
        if pole.is_real:
            blocks.append(np.array([[pole.radius * np.cos(pole.angle)]]))
        else:
            c = pole.radius * np.cos(pole.angle)
            s = pole.radius * np.sin(pole.angle)
            blocks.append(np.array([[c, -s], [s, c]]))
    return linalg.block_diag(*blocks)


def build_bank(description: BankDescription, grid: FrequencyGrid) -> FilterBank:
    """Build a bank from its configuration form"""
    if isinstance(description, CovarianceExtensionBankDescription):
        return covariance_extension_bank(description.n, description.m, grid)
    if isinstance(description, PoleBankDescription):
        A = pole_bank_matrix(description.poles)
        if description.B == "ones":
            B = np.ones((A.shape[0], 1))
        else:
            B = np.asarray(description.B, dtype=float)
        return make_filterbank(A, B, grid)
    if isinstance(description, ExplicitBankDescription):
        return make_filterbank(np.asarray(description.A), np.asarray(description.B), grid)
    raise DimensionError(f"unknown bank description {description!r}")


# Moment operator and Range Gamma

def gamma_op(bank: FilterBank, phi: SpectrumGrid) -> np.ndarray:
    """Real symmetric state covariance integral of G Phi G*"""
    if phi.dim != bank.m:
        raise DimensionError(f"spectrum dimension {phi.dim} does not match bank input {bank.m}")
    if phi.grid.K != bank.grid.K:
        bank = on_grid(bank, phi.grid)
    G = bank.half_response
    terms = G @ phi.half_values @ np.conj(np.swapaxes(G, -1, -2))
    sigma = np.real(np.tensordot(phi.grid.half_weights, terms, axes=1))
    return 0.5 * (sigma + sigma.T)


def gstar_lambda_g(bank: FilterBank, lam: np.ndarray) -> np.ndarray:
    """G* Lambda G on the half grid, shape (K/2 + 1, m, m)"""
    G = bank.half_response
    return np.conj(np.swapaxes(G, -1, -2)) @ np.asarray(lam) @ G


def _b_projector(bank: FilterBank) -> np.ndarray:
    B = bank.B
    return np.eye(bank.n) - B @ np.linalg.solve(B.T @ B, B.T)


def _check_square(bank: FilterBank, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (bank.n, bank.n):
        raise DimensionError(f"expected {bank.n} x {bank.n} matrices, got shape {X.shape}")
    return X


def V_op(bank: FilterBank, Q: np.ndarray) -> np.ndarray:
    """V(Q) = Pi (Q - A Q A^T) Pi with Pi the projector onto the complement of range B"""
    Q = _check_square(bank, Q)
    projector = _b_projector(bank)
    A = bank.A
    return projector @ (Q - A @ Q @ A.T) @ projector


def V_star(bank: FilterBank, delta: np.ndarray) -> np.ndarray:
    """Adjoint of V: Pi Delta Pi - A^T Pi Delta Pi A"""
    delta = _check_square(bank, delta)
    projector = _b_projector(bank)
    A = bank.A
    core = projector @ delta @ projector
    return core - A.T @ core @ A


def stein_solve(bank: FilterBank, H: np.ndarray) -> np.ndarray:
    """Solve P - A P A^T = B H + H^T B^T"""
    H = np.asarray(H, dtype=float)
    if H.shape != (bank.m, bank.n):
        raise DimensionError(f"H must be {bank.m} x {bank.n}, got {H.shape}")
    rhs = bank.B @ H + H.T @ bank.B.T
    P = linalg.solve_discrete_lyapunov(bank.A, rhs)
    return 0.5 * (P + P.T)


def _orthonormalize(vectors: List[np.ndarray], drop_tol: float) -> np.ndarray:
    """Modified Gram-Schmidt (two passes) dropping vectors that fall below drop_tol relative norm"""
    basis: List[np.ndarray] = []
    for vector in vectors:
        norm0 = np.linalg.norm(vector)
        if norm0 == 0.0:
            continue
        v = vector.copy()
        for _ in range(2):
            for q in basis:
                v -= np.dot(q, v) * q
        norm = np.linalg.norm(v)
        if norm > drop_tol * norm0:
            basis.append(v / norm)
    return np.array(basis)


def range_gamma_basis(bank: FilterBank, drop_tol: Optional[float] = None) -> RangeGammaBasis:
    """Orthonormal basis of Range Gamma from Stein solutions on elementary H"""
    if drop_tol is None:
        drop_tol = get_settings().BASIS_DROP_TOL
    candidates = []
    for i in range(bank.m):
        for j in range(bank.n):
            H = np.zeros((bank.m, bank.n))
            H[i, j] = 1.0
            candidates.append(matfun_service.sym_to_vec(stein_solve(bank, H)))
    vectors = _orthonormalize(candidates, drop_tol)
    matrices = matfun_service.vec_to_sym(vectors, bank.n)
    logger.debug(f"Range Gamma basis: M={len(vectors)} for n={bank.n}, m={bank.m}")
    return RangeGammaBasis(matrices=matrices, vectors=vectors)


def coordinates(basis: RangeGammaBasis, P: np.ndarray) -> np.ndarray:
    return basis.vectors @ matfun_service.sym_to_vec(P)


def project(basis: RangeGammaBasis, P: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a symmetric matrix onto Range Gamma"""
    return basis.to_matrix(coordinates(basis, 0.5 * (P + np.transpose(P))))


def projection_residual(basis: RangeGammaBasis, P: np.ndarray) -> float:
    P = 0.5 * (np.asarray(P) + np.transpose(P))
    return float(np.linalg.norm(P - project(basis, P)))


def in_range_gamma(bank: FilterBank, P: np.ndarray, tol: float = 1e-8) -> bool:
    """Membership through the Stein equation: least-squares fit of H, relative residual <= tol"""
    P = _check_square(bank, P)
    target = matfun_service.sym_to_vec(P - bank.A @ P @ bank.A.T)
    columns = []
    for i in range(bank.m):
        for j in range(bank.n):
            E = np.zeros((bank.m, bank.n))
            E[i, j] = 1.0
            columns.append(matfun_service.sym_to_vec(bank.B @ E + E.T @ bank.B.T))
    operator = np.array(columns).T
    solution, *_ = np.linalg.lstsq(operator, target, rcond=None)
    residual = np.linalg.norm(operator @ solution - target)
    return bool(residual <= tol * max(np.linalg.norm(P), 1e-300))


def v_kernel_test(bank: FilterBank, P: np.ndarray, tol: float = 1e-8) -> bool:
    """Membership through V(P) = 0"""
    P = _check_square(bank, P)
    return bool(np.linalg.norm(V_op(bank, P)) <= tol * max(np.linalg.norm(P), 1e-300))


def whiten(
    bank: FilterBank,
    sigma: np.ndarray,
    basis: Optional[RangeGammaBasis] = None,
    range_tol: Optional[float] = None,
) -> FilterBank:
    """
    Replace (A, B) by (S^{-1/2} A S^{1/2}, S^{-1/2} B) so the moment constraint reads I

    Args:
        bank: original filter bank
        sigma: positive definite state covariance in Range Gamma
        basis: Range Gamma basis of `bank` (computed when omitted)
        range_tol: admissible relative distance of sigma from Range Gamma

    Raises:
        NotPositiveDefinite: sigma is not PD
        NotInRangeGamma: sigma is farther than range_tol * ||sigma|| from Range Gamma
    """
    if range_tol is None:
        range_tol = get_settings().RANGE_TOL
    sigma = _check_square(bank, sigma)
    sigma = 0.5 * (sigma + sigma.T)
    root = matfun_service.herm_power(sigma, 0.5)
    inverse_root = matfun_service.herm_power(sigma, -0.5)
    if basis is None:
        basis = range_gamma_basis(bank)
    residual = projection_residual(basis, sigma)
    if residual > range_tol * np.linalg.norm(sigma):
        raise NotInRangeGamma(
            f"covariance is {residual:.3e} away from Range Gamma (norm {np.linalg.norm(sigma):.3e})"
        )
    A_bar = inverse_root @ bank.A @ root
    B_bar = inverse_root @ bank.B
    response = inverse_root @ bank.response
    return FilterBank(A=A_bar, B=B_bar, grid=bank.grid, response=response)
