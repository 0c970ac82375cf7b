"""Spectrum approximation: minimize S_nu(Phi || Psi) subject to int G Phi G* = I.

The solution is Phi_nu(Lambda) = (Psi^{-1/nu} + (1/nu) G* Lambda G)^{-nu}, with
Lambda the minimizer over Range Gamma of the dual

    J_nu(Lambda) = nu/(nu-1) int tr[(Psi^{-1/nu} + G* Lambda G / nu)^{1-nu}] + tr Lambda   (nu >= 2)
    J_1(Lambda)  = -int log det(Psi^{-1} + G* Lambda G) + tr Lambda

and, for the Kullback-Leibler criterion, Phi_KL = exp(log Psi - G* Lambda G) with
J_KL = int tr Phi_KL + tr Lambda. All integrals are evaluated on the half grid.
"""
import logging
from typing import Literal, Optional, Tuple

import numpy as np

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    DimensionError,
    InitialPointInadmissible,
    NotAdmissible,
    NotInRangeGamma,
    NotPositiveDefinite,
)
from betaspec.core.logging import timed
from betaspec.models.domain.filterbank import FilterBank, RangeGammaBasis
from betaspec.models.domain.solver import Multiplier, SolverReport
from betaspec.models.domain.spectra import SpectrumGrid
from betaspec.services import filterbank_service, matfun_service, newton_service, spectra_service
from betaspec.services.newton_service import DualEvaluation

logger = logging.getLogger(__name__)

Divergence = Literal["beta", "kl"]

# above this nu the Hessian kernel uses divided differences instead of the power sum
POWER_SUM_LIMIT = 64


def _ct(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def hessian_kernel(d: np.ndarray, nu: int) -> np.ndarray:
    """K_ab = (1/nu) sum_{l=1}^{nu} q_a^l q_b^{nu+1-l} with q = 1/d

    This is minus the divided difference of t -> t^{-nu}, divided by nu.
    """
    q = 1.0 / d
    if nu <= POWER_SUM_LIMIT:
        powers = np.arange(1, nu + 1)
        left = q[..., :, None, None] ** powers
        right = q[..., None, :, None] ** (nu + 1 - powers)
        return np.mean(left * right, axis=-1)
    return -matfun_service.divided_differences(
        d, lambda t: t ** (-float(nu)), lambda t: -nu * t ** (-nu - 1.0)
    ) / nu


class SpectrumDual:
    """Dual functional of the spectrum approximation problem on a fixed grid"""

    def __init__(
        self,
        psi: SpectrumGrid,
        bank: FilterBank,
        nu: int = 1,
        divergence: Divergence = "beta",
        basis: Optional[RangeGammaBasis] = None,
        rcond: Optional[float] = None,
    ):
        if psi.dim != bank.m:
            raise DimensionError(f"prior dimension {psi.dim} does not match bank input dimension {bank.m}")
        if psi.grid.K != bank.grid.K:
            bank = filterbank_service.on_grid(bank, psi.grid)
        spectra_service.nu_to_beta(nu)
        self.psi = psi
        self.bank = bank
        self.nu = nu
        self.divergence = divergence
        self.rcond = rcond
        self.weights = psi.grid.half_weights
        self.G = bank.half_response
        self._basis = basis
        self._S = None
        if divergence == "kl":
            self.base = matfun_service.matrix_log(psi.half_values)
        else:
            self.base = matfun_service.herm_power(psi.half_values, -1.0 / nu)

    @property
    def basis(self) -> RangeGammaBasis:
        if self._basis is None:
            self._basis = filterbank_service.range_gamma_basis(self.bank)
        return self._basis

    @property
    def S(self) -> np.ndarray:
        """G* Sigma_k G for every basis element, shape (M, K/2 + 1, m, m)"""
        if self._S is None:
            self._S = _ct(self.G) @ self.basis.matrices[:, None] @ self.G
        return self._S

    @property
    def traces(self) -> np.ndarray:
        return np.trace(self.basis.matrices, axis1=-2, axis2=-1)

    def gstar(self, lam: np.ndarray) -> np.ndarray:
        return filterbank_service.gstar_lambda_g(self.bank, lam)

    def argument(self, gstar: np.ndarray) -> np.ndarray:
        if self.divergence == "kl":
            return self.base - gstar
        return self.base + gstar / self.nu

    def decompose(self, gstar: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        """Eigendecomposition of the pointwise argument and the admissibility margin"""
        d, U = matfun_service.eigh_descending(self.argument(gstar))
        if self.divergence == "kl":
            return d, U, float(np.min(np.exp(d[..., -1])))
        margin = float(np.min(d[..., -1]))
        try:
            matfun_service.check_eigenvalues(d)
        except NotPositiveDefinite as e:
            raise NotAdmissible(f"multiplier is not admissible: {str(e)}")
        return d, U, margin

    def value(self, d: np.ndarray, trace_lam: float) -> float:
        if self.divergence == "kl":
            density = np.sum(np.exp(d), axis=-1)
        elif self.nu == 1:
            density = -np.sum(np.log(d), axis=-1)
        else:
            density = self.nu / (self.nu - 1.0) * np.sum(d ** (1.0 - self.nu), axis=-1)
        return float(np.dot(self.weights, density) + trace_lam)

    def primal_values(self, d: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Phi on the half grid from the argument's eigendecomposition"""
        if self.divergence == "kl":
            values = np.exp(d)
        else:
            values = d ** (-float(self.nu))
        return matfun_service.hermitian_part((U * values[..., None, :]) @ _ct(U))

    def kernel(self, d: np.ndarray) -> np.ndarray:
        if self.divergence == "kl":
            return matfun_service.divided_differences(d, np.exp, np.exp, scale_floor=1.0)
        return hessian_kernel(d, self.nu)

    def integrate_gamma(self, half_values: np.ndarray) -> np.ndarray:
        """Real part of the half-grid integral of G X G*"""
        terms = self.G @ half_values @ _ct(self.G)
        return np.real(np.einsum("h,...hij->...ij", self.weights, terms))

    def hessian_apply(self, d: np.ndarray, U: np.ndarray, dlam_gstar: np.ndarray) -> np.ndarray:
        """int G U (K o U* G* dLambda G U) U* G*, for one or a stack of directions"""
        rotated = _ct(U) @ dlam_gstar @ U
        inner = U @ (self.kernel(d) * rotated) @ _ct(U)
        result = self.integrate_gamma(inner)
        return 0.5 * (result + np.swapaxes(result, -1, -2))

    def hessian(self, d: np.ndarray, U: np.ndarray) -> np.ndarray:
        """M x M Hessian on the Range Gamma basis"""
        rotated = _ct(U) @ self.S @ U
        K = self.kernel(d)
        matrix = np.real(np.einsum("h,hab,jhab,khab->jk", self.weights, K, rotated, np.conj(rotated)))
        return 0.5 * (matrix + matrix.T)

    # NewtonProblem interface

    def evaluate(self, x: np.ndarray, derivatives: bool = True) -> DualEvaluation:
        gstar = np.tensordot(x, self.S, axes=1)
        d, U, margin = self.decompose(gstar)
        evaluation = DualEvaluation(value=self.value(d, float(np.dot(x, self.traces))), margin=margin)
        if not derivatives:
            return evaluation
        phi = self.primal_values(d, U)
        moments = np.real(np.einsum("h,khab,hba->k", self.weights, self.S, phi))
        evaluation.gradient = self.traces - moments
        evaluation.cache = {"d": d, "U": U, "phi": phi}
        return evaluation

    def search_direction(self, x: np.ndarray, evaluation: DualEvaluation) -> np.ndarray:
        """Solve Y = sum_k alpha_k Y_k in least squares, with Y = int G Phi G* - I and
        Y_k the Hessian applied to the k-th basis element"""
        cache = evaluation.cache
        n = self.bank.n
        Y = self.integrate_gamma(cache["phi"]) - np.eye(n)
        Y_k = self.hessian_apply(cache["d"], cache["U"], self.S)
        system = matfun_service.sym_to_vec(Y_k).T
        rhs = matfun_service.sym_to_vec(0.5 * (Y + Y.T))
        return newton_service.solve_least_squares(system, rhs, rcond=self.rcond, label="spectapprox")

    def spectrum(self, x: np.ndarray) -> SpectrumGrid:
        d, U, _ = self.decompose(np.tensordot(x, self.S, axes=1))
        return spectra_service.spectrum_from_half(self.primal_values(d, U), self.psi.grid)


# Module-level operations on explicit multipliers

def _lambda(lam: np.ndarray, bank: FilterBank) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (bank.n, bank.n):
        raise DimensionError(f"multiplier must be {bank.n} x {bank.n}, got {lam.shape}")
    return 0.5 * (lam + lam.T)


def q_lambda(lam: np.ndarray, psi: SpectrumGrid, bank: FilterBank, nu: int) -> SpectrumGrid:
    """Q_Lambda = (Psi^{-1/nu} + G* Lambda G / nu)^{-1}"""
    dual = SpectrumDual(psi, bank, nu)
    d, U, _ = dual.decompose(dual.gstar(_lambda(lam, dual.bank)))
    values = (U * (1.0 / d)[..., None, :]) @ _ct(U)
    return spectra_service.spectrum_from_half(values, psi.grid)


def margin(lam: np.ndarray, psi: SpectrumGrid, bank: FilterBank, nu: int) -> float:
    """Minimum over the grid of the smallest eigenvalue of Psi^{-1/nu} + G* Lambda G / nu"""
    dual = SpectrumDual(psi, bank, nu)
    argument = dual.argument(dual.gstar(_lambda(lam, dual.bank)))
    return float(np.min(np.linalg.eigvalsh(argument)[..., 0]))


def phi_nu(lam: np.ndarray, psi: SpectrumGrid, bank: FilterBank, nu: int) -> SpectrumGrid:
    """Phi_nu(Lambda) = (Psi^{-1/nu} + G* Lambda G / nu)^{-nu}

    Raises:
        NotAdmissible: the argument is not PD somewhere on the grid
    """
    dual = SpectrumDual(psi, bank, nu)
    d, U, _ = dual.decompose(dual.gstar(_lambda(lam, dual.bank)))
    return spectra_service.spectrum_from_half(dual.primal_values(d, U), psi.grid)


def phi_kl(lam: np.ndarray, psi: SpectrumGrid, bank: FilterBank) -> SpectrumGrid:
    """Phi_KL(Lambda) = exp(log Psi - G* Lambda G)"""
    dual = SpectrumDual(psi, bank, divergence="kl")
    argument = dual.argument(dual.gstar(_lambda(lam, dual.bank)))
    return spectra_service.spectrum_exp(spectra_service.spectrum_from_half(argument, psi.grid))


def dual_value(
    lam: np.ndarray, psi: SpectrumGrid, bank: FilterBank, nu: int, divergence: Divergence = "beta"
) -> float:
    """J_nu(Lambda) (or J_KL with divergence="kl")"""
    dual = SpectrumDual(psi, bank, nu, divergence)
    lam = _lambda(lam, dual.bank)
    d, _, _ = dual.decompose(dual.gstar(lam))
    return dual.value(d, float(np.trace(lam)))


def dual_gradient(
    lam: np.ndarray,
    psi: SpectrumGrid,
    bank: FilterBank,
    nu: int,
    basis: Optional[RangeGammaBasis] = None,
    divergence: Divergence = "beta",
) -> np.ndarray:
    """Coordinates of I - int G Phi(Lambda) G* on the Range Gamma basis"""
    dual = SpectrumDual(psi, bank, nu, divergence, basis=basis)
    lam = _lambda(lam, dual.bank)
    d, U, _ = dual.decompose(dual.gstar(lam))
    gradient = np.eye(dual.bank.n) - dual.integrate_gamma(dual.primal_values(d, U))
    return filterbank_service.coordinates(dual.basis, gradient)


def dual_hessian_apply(
    lam: np.ndarray,
    dlam: np.ndarray,
    psi: SpectrumGrid,
    bank: FilterBank,
    nu: int,
    divergence: Divergence = "beta",
) -> np.ndarray:
    """Second variation of J at Lambda applied to dLambda, as a symmetric n x n matrix"""
    dual = SpectrumDual(psi, bank, nu, divergence)
    d, U, _ = dual.decompose(dual.gstar(_lambda(lam, dual.bank)))
    return dual.hessian_apply(d, U, dual.gstar(_lambda(dlam, dual.bank)))


def hessian_matrix(
    lam: np.ndarray,
    psi: SpectrumGrid,
    bank: FilterBank,
    nu: int,
    basis: Optional[RangeGammaBasis] = None,
    divergence: Divergence = "beta",
) -> np.ndarray:
    """M x M Hessian of J on the Range Gamma basis"""
    dual = SpectrumDual(psi, bank, nu, divergence, basis=basis)
    d, U, _ = dual.decompose(dual.gstar(_lambda(lam, dual.bank)))
    return dual.hessian(d, U)


def _starting_point(dual: SpectrumDual, initial: Literal["identity", "zero"], label: str) -> np.ndarray:
    """Lambda_0 = I unless Lambda_0 = 0 is closer to stationarity or I is not admissible"""
    zero = np.zeros(dual.basis.size)
    try:
        zero_norm = float(np.linalg.norm(dual.evaluate(zero).gradient))
    except NotAdmissible as e:
        raise InitialPointInadmissible(f"{label}: no admissible starting point ({str(e)})")
    if initial == "zero":
        return zero
    identity = filterbank_service.coordinates(dual.basis, np.eye(dual.bank.n))
    try:
        identity_norm = float(np.linalg.norm(dual.evaluate(identity).gradient))
    except NotAdmissible:
        logger.warning(f"{label}: Lambda_0 = I is not admissible, starting from Lambda_0 = 0")
        return zero
    if zero_norm < identity_norm:
        logger.debug(f"{label}: |g(0)|={zero_norm:.3e} < |g(I)|={identity_norm:.3e}, starting from Lambda_0 = 0")
        return zero
    return identity


def newton_solve(
    psi: SpectrumGrid,
    bank: FilterBank,
    nu: int = 1,
    eps: Optional[float] = None,
    alpha: Optional[float] = None,
    max_iter: Optional[int] = None,
    max_backtrack: Optional[int] = None,
    divergence: Divergence = "beta",
    initial: Literal["identity", "zero"] = "identity",
    basis: Optional[RangeGammaBasis] = None,
) -> Tuple[SpectrumGrid, SolverReport]:
    """
    Matricial Newton method with backtracking for the spectrum approximation dual

    Args:
        psi: coercive prior spectrum
        bank: whitened filter bank (I must lie in Range Gamma)
        nu: positive integer divergence index
        eps: stop when the gradient coordinate norm is at most eps
        alpha: Armijo parameter in (0, 1/2)
        max_iter: Newton iteration limit
        max_backtrack: halvings per line search
        divergence: "beta" for S_nu, "kl" for the Kullback-Leibler criterion
        initial: starting multiplier, Lambda_0 = I or Lambda_0 = 0; "identity" falls back
            to 0 when I is inadmissible or 0 has the smaller gradient (a feasible prior)
        basis: precomputed Range Gamma basis of `bank`

    Returns:
        Tuple of the estimate Phi and its SolverReport

    Raises:
        NotInRangeGamma: I is not in Range Gamma of the bank
        InitialPointInadmissible, MaxIterationsExceeded, SingularHessian, LineSearchFailed
    """
    settings = get_settings()
    dual = SpectrumDual(psi, bank, nu, divergence, basis=basis)
    n = dual.bank.n
    identity_residual = filterbank_service.projection_residual(dual.basis, np.eye(n))
    if identity_residual > settings.RANGE_TOL * np.sqrt(n):
        raise NotInRangeGamma(f"I is {identity_residual:.3e} away from Range Gamma; whiten the bank first")

    label = f"spectapprox[{divergence}, nu={nu}]"
    x0 = _starting_point(dual, initial, label)

    with timed(label):
        trace = newton_service.damped_newton(
            dual,
            x0,
            eps=eps,
            alpha=alpha,
            max_iter=max_iter,
            max_backtrack=max_backtrack,
            label=label,
        )
    phi = dual.spectrum(trace.x)
    lam = dual.basis.to_matrix(trace.x)
    residual = float(np.linalg.norm(filterbank_service.gamma_op(dual.bank, phi) - np.eye(n)))
    if divergence == "kl":
        divergence_value = spectra_service.kl_divergence(phi, psi)
    else:
        divergence_value = spectra_service.nu_divergence(phi, psi, nu)
    report = SolverReport(
        nu=nu,
        divergence_type=divergence,
        iterations=trace.records,
        multiplier=Multiplier(lam=lam, coordinates=trace.x, margin=trace.records[-1].margin),
        constraint_residual=residual,
        divergence=divergence_value,
        converged=trace.converged,
    )
    logger.info(
        f"{label}: divergence={divergence_value:.6e} residual={residual:.3e} "
        f"iterations={report.iteration_count}"
    )
    return phi, report
