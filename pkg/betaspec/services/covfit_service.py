"""Structured covariance estimation.

Projects a sample state covariance onto Range Gamma (V(P) = 0) under the
Beta matrix divergence D_nu(P || Sigma_C), by damped Newton on the dual.
The dual variable Delta lives in [ker V*]^perp and is handled through
coordinates y on an orthonormal basis D_1..D_r of that subspace.

With W_k = V*(D_k) and R(y) = Sigma_C^{-1/nu} + (1/nu) sum_k y_k W_k:

    P(y)  = R^{-nu}
    J(y)  = nu/(nu-1) tr R^{1-nu}           (nu >= 2)
          = -log det R                       (nu = 1)
    g_k   = -<P, W_k> = -<V(P), D_k>
    H_jk  = -<W_j, D(t^-nu)(R)[W_k / nu]>

The Kullback-Leibler variant uses P = exp(log Sigma_C - sum_k y_k W_k) and
J = tr P - tr Sigma_C.
"""
import logging
from typing import Literal, Optional

import numpy as np

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    DimensionError,
    InitialPointInadmissible,
    NotAdmissible,
    NotPositiveDefinite,
    SolverError,
)
from betaspec.core.logging import timed
from betaspec.models.domain.filterbank import FilterBank
from betaspec.models.domain.solver import CovDualPoint, CovFitResult
from betaspec.services import filterbank_service, matfun_service, newton_service, spectra_service
from betaspec.services.newton_service import DualEvaluation

logger = logging.getLogger(__name__)


# Matrix divergences

def _check_pair(P: np.ndarray, Q: np.ndarray) -> None:
    if P.shape != Q.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"expected two square matrices of equal size, got {P.shape} and {Q.shape}")


def beta_matrix_divergence(P: np.ndarray, Q: np.ndarray, beta: float) -> float:
    """D_beta(P || Q); the Beta divergence of the constant spectra P and Q"""
    P = np.asarray(P)
    Q = np.asarray(Q)
    _check_pair(P, Q)
    value = float(spectra_service.beta_trace_density(P, Q, beta))
    scale = float(np.real(np.trace(P) + np.trace(Q)))
    return spectra_service.clamp_roundoff(value, scale, f"D_beta(beta={beta})")


def nu_matrix_divergence(P: np.ndarray, Q: np.ndarray, nu: int) -> float:
    return beta_matrix_divergence(P, Q, spectra_service.nu_to_beta(nu))


def burg_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    """D_B(P || Q) = tr[log Q - log P + P Q^{-1} - I]"""
    return beta_matrix_divergence(P, Q, 0.0)


def information_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    """Information divergence of zero-mean Gaussians with covariances P and Q (D_B / 2)"""
    return 0.5 * burg_divergence(P, Q)


def kl_matrix_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    """Umegaki-von Neumann relative entropy extended to unequal traces"""
    return beta_matrix_divergence(P, Q, 1.0)


# Dual variable primitives

def ker_vstar_perp_basis(bank: FilterBank, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of [ker V*]^perp as symmetric matrices, shape (r, n, n)"""
    n = bank.n
    size = n * (n + 1) // 2
    units = matfun_service.vec_to_sym(np.eye(size), n)
    operator = np.array([matfun_service.sym_to_vec(filterbank_service.V_star(bank, unit)) for unit in units]).T
    _, singular_values, vt = np.linalg.svd(operator)
    rank = int(np.sum(singular_values > tol * singular_values[0]))
    return matfun_service.vec_to_sym(vt[:rank], n)


def _check_sigma(sigma_c: np.ndarray, bank: FilterBank) -> np.ndarray:
    sigma_c = np.asarray(sigma_c, dtype=float)
    if sigma_c.shape != (bank.n, bank.n):
        raise DimensionError(f"sample covariance must be {bank.n} x {bank.n}, got {sigma_c.shape}")
    sigma_c = 0.5 * (sigma_c + sigma_c.T)
    matfun_service.check_positive_definite(sigma_c)
    return sigma_c


def _nu_argument(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank, nu: int) -> np.ndarray:
    R = matfun_service.herm_power(sigma_c, -1.0 / nu) + filterbank_service.V_star(bank, delta) / nu
    if not matfun_service.is_positive_definite(R):
        raise NotAdmissible(f"Delta is not admissible: min eigenvalue {matfun_service.min_eigenvalue(R):.3e}")
    return R


def certificate(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank, nu: int) -> float:
    """Smallest eigenvalue of Sigma_C^{-1/nu} + V*(Delta)/nu; positive iff Delta is admissible"""
    sigma_c = _check_sigma(sigma_c, bank)
    R = matfun_service.herm_power(sigma_c, -1.0 / nu) + filterbank_service.V_star(bank, delta) / nu
    return float(matfun_service.min_eigenvalue(R))


def P_nu(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank, nu: int) -> np.ndarray:
    """(Sigma_C^{-1/nu} + V*(Delta)/nu)^{-nu}"""
    sigma_c = _check_sigma(sigma_c, bank)
    return matfun_service.herm_power(_nu_argument(delta, sigma_c, bank, nu), -float(nu))


def P_kl(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank) -> np.ndarray:
    """exp(log Sigma_C - V*(Delta)); positive definite for every Delta"""
    sigma_c = _check_sigma(sigma_c, bank)
    return matfun_service.matrix_exp(matfun_service.matrix_log(sigma_c) - filterbank_service.V_star(bank, delta))


def cov_dual_value(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank, nu: int) -> float:
    """Dual functional J_nu(Delta); -log det for nu = 1"""
    sigma_c = _check_sigma(sigma_c, bank)
    R = _nu_argument(delta, sigma_c, bank, nu)
    eigenvalues = np.linalg.eigvalsh(R)
    if nu == 1:
        return float(-np.sum(np.log(eigenvalues)))
    return float(nu / (nu - 1.0) * np.sum(eigenvalues ** (1.0 - nu)))


def cov_dual_kl_value(delta: np.ndarray, sigma_c: np.ndarray, bank: FilterBank) -> float:
    """Dual functional tr P_KL(Delta) - tr Sigma_C"""
    P = P_kl(delta, sigma_c, bank)
    return float(np.trace(P) - np.trace(sigma_c))


class CovarianceDual:
    """Dual problem in coordinates on [ker V*]^perp"""

    def __init__(
        self,
        sigma_c: np.ndarray,
        bank: FilterBank,
        nu: int = 1,
        divergence: Literal["beta", "kl"] = "beta",
        rcond: Optional[float] = None,
    ):
        self.sigma_c = _check_sigma(sigma_c, bank)
        self.bank = bank
        self.nu = nu
        self.divergence = divergence
        self.rcond = rcond
        self.directions = ker_vstar_perp_basis(bank)
        self.images = np.array([filterbank_service.V_star(bank, D) for D in self.directions])
        if divergence == "kl":
            self.base = matfun_service.matrix_log(self.sigma_c)
        else:
            self.base = matfun_service.herm_power(self.sigma_c, -1.0 / nu)

    @property
    def size(self) -> int:
        return len(self.directions)

    def delta(self, y: np.ndarray) -> np.ndarray:
        return np.tensordot(y, self.directions, axes=1)

    def argument(self, y: np.ndarray) -> np.ndarray:
        shift = np.tensordot(y, self.images, axes=1)
        if self.divergence == "kl":
            return self.base - shift
        return self.base + shift / self.nu

    def primal(self, y: np.ndarray) -> np.ndarray:
        R = self.argument(y)
        if self.divergence == "kl":
            return matfun_service.matrix_exp(R)
        try:
            return matfun_service.herm_power(R, -float(self.nu))
        except NotPositiveDefinite as e:
            raise NotAdmissible(str(e))

    def evaluate(self, y: np.ndarray, derivatives: bool = True) -> DualEvaluation:
        R = self.argument(y)
        eigenvalues = np.linalg.eigvalsh(R)
        if self.divergence == "kl":
            P = matfun_service.matrix_exp(R)
            value = float(np.sum(np.exp(eigenvalues)) - np.trace(self.sigma_c))
            margin = float(np.exp(eigenvalues[0]))
        else:
            margin = float(eigenvalues[0])
            if not matfun_service.is_positive_definite(R):
                raise NotAdmissible(f"certificate {margin:.3e} is not positive")
            if self.nu == 1:
                value = float(-np.sum(np.log(eigenvalues)))
            else:
                value = float(self.nu / (self.nu - 1.0) * np.sum(eigenvalues ** (1.0 - self.nu)))
            P = None
        evaluation = DualEvaluation(value=value, margin=margin)
        if not derivatives:
            return evaluation
        if P is None:
            P = matfun_service.herm_power(R, -float(self.nu))
        evaluation.gradient = -matfun_service.inner(self.images, P)
        if self.divergence == "kl":
            columns = matfun_service.frechet_exp(R, self.images)
        else:
            columns = -matfun_service.frechet_power(R, -float(self.nu), self.images / self.nu)
        hessian = matfun_service.inner(self.images[:, None], columns[None, :])
        evaluation.hessian = 0.5 * (hessian + hessian.T)
        evaluation.cache = P
        return evaluation

    def search_direction(self, y: np.ndarray, evaluation: DualEvaluation) -> np.ndarray:
        return newton_service.solve_least_squares(
            evaluation.hessian, -evaluation.gradient, rcond=self.rcond, label="covfit"
        )


def _result(dual: CovarianceDual, y: np.ndarray, trace, converged: bool) -> CovFitResult:
    P = dual.primal(y)
    delta = dual.delta(y)
    if dual.divergence == "kl":
        divergence = kl_matrix_divergence(P, dual.sigma_c)
        certificate_value = float(np.linalg.eigvalsh(P)[0])
    else:
        divergence = nu_matrix_divergence(P, dual.sigma_c, dual.nu)
        certificate_value = float(matfun_service.min_eigenvalue(dual.argument(y)))
    return CovFitResult(
        P=0.5 * (P + P.T),
        dual=CovDualPoint(delta=delta, certificate=certificate_value),
        divergence=divergence,
        residual=float(np.linalg.norm(filterbank_service.V_op(dual.bank, P))),
        nu=dual.nu,
        divergence_type=dual.divergence,
        iterations=trace.records,
        converged=converged,
    )


def solve_covfit(
    sigma_c: np.ndarray,
    bank: FilterBank,
    nu: int = 1,
    divergence: Literal["beta", "kl"] = "beta",
    eps: Optional[float] = None,
    alpha: Optional[float] = None,
    max_iter: Optional[int] = None,
    max_backtrack: Optional[int] = None,
) -> CovFitResult:
    """
    Closest point of Range Gamma to the sample covariance under D_nu (or KL)

    Args:
        sigma_c: positive definite sample state covariance
        bank: filter bank defining Range Gamma
        nu: positive integer divergence index (ignored for divergence="kl")
        divergence: "beta" for D_nu, "kl" for the matrix Kullback-Leibler divergence
        eps: stationarity threshold relative to max(1, ||sigma_c||_F)
        alpha: Armijo parameter
        max_iter: Newton iteration limit
        max_backtrack: halvings per line search

    Returns:
        CovFitResult with P satisfying V(P) = 0

    Raises:
        NotPositiveDefinite: sigma_c is not PD
        MaxIterationsExceeded: the exception's `result` holds the partial CovFitResult
    """
    settings = get_settings()
    spectra_service.nu_to_beta(nu)
    eps = settings.COV_EPS if eps is None else eps
    max_iter = settings.COV_MAX_ITER if max_iter is None else max_iter
    dual = CovarianceDual(sigma_c, bank, nu=nu, divergence=divergence)
    tolerance = eps * max(1.0, float(np.linalg.norm(dual.sigma_c)))
    label = f"covfit[{divergence}, nu={nu}]"
    y0 = np.zeros(dual.size)
    with timed(label):
        try:
            trace = newton_service.damped_newton(
                dual,
                y0,
                eps=tolerance,
                alpha=alpha,
                max_iter=max_iter,
                max_backtrack=max_backtrack,
                label=label,
            )
        except NotAdmissible as e:
            raise InitialPointInadmissible(f"{label}: Delta = 0 is not admissible ({str(e)})")
        except SolverError as e:
            if e.trace is not None:
                e.result = _result(dual, e.trace.x, e.trace, converged=False)
            raise
    result = _result(dual, trace.x, trace, converged=True)
    logger.info(
        f"{label}: divergence={result.divergence:.6e} residual={result.residual:.3e} "
        f"iterations={result.iteration_count}"
    )
    return result


