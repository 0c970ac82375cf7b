"""Synthetic experiments: targets, priors, simulated data and the two estimation pipelines.

known_sigma:  Omega -> exact Sigma -> whiten -> newton_solve for every nu
data_driven:  simulate y -> sample Sigma_C -> covfit -> whiten -> newton_solve for every nu
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg, signal

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    ConfigurationError,
    DimensionError,
    NonPositiveInput,
    TooFewSamples,
)
from betaspec.core.logging import timed
from betaspec.models.domain.experiment import (
    ArmaModel,
    ArmaTarget,
    BandpassTarget,
    ConstantPrior,
    ExperimentConfig,
    ExperimentResult,
    IdentityPrior,
    NuResult,
    PriorDescription,
    RationalPrior,
    SampleVariancePrior,
    TargetPrior,
    TargetVariancePrior,
)
from betaspec.models.domain.filterbank import FilterBank, RangeGammaBasis
from betaspec.models.domain.solver import DegreeDiagnostic
from betaspec.models.domain.spectra import FrequencyGrid, RationalScalarFactor, SpectrumGrid
from betaspec.services import covfit_service, filterbank_service, spectapprox_service, spectra_service

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
EXPERIMENTS = ("arma", "scalar-bandpass", "bivariate-bandpass", "data-driven")


# ARMA processes

def arma_spectrum(model: ArmaModel, grid: FrequencyGrid) -> SpectrumGrid:
    """variance * |b(e^{j theta}) / a(e^{j theta})|^2 on the grid"""
    _, response = signal.freqz(model.ma_polynomial, model.ar_polynomial, worN=grid.half_theta)
    half = model.variance * np.abs(response) ** 2
    return spectra_service.spectrum_from_half(half[:, None, None], grid)


def impulse_response(model: ArmaModel, length: int) -> np.ndarray:
    impulse = np.zeros(length)
    impulse[0] = 1.0
    return signal.lfilter(model.ma_polynomial, model.ar_polynomial, impulse)


def arma_autocovariance(model: ArmaModel, lags: int, length: int = 4096) -> np.ndarray:
    """r_0 .. r_{lags-1} from a truncated impulse response"""
    h = impulse_response(model, length + lags)
    return model.variance * np.array([np.dot(h[: len(h) - lag], h[lag:]) for lag in range(lags)])


def simulate_arma(model: ArmaModel, N: int, seed: Optional[int] = None) -> np.ndarray:
    """Gaussian ARMA path of length N after a burn-in of 10 (p + q) samples"""
    if N < 1:
        raise ConfigurationError(f"sample length must be positive, got {N}")
    seed = get_settings().SEED if seed is None else seed
    burn_in = 10 * (model.p + model.q)
    rng = np.random.default_rng(seed)
    noise = np.sqrt(model.variance) * rng.standard_normal(N + burn_in)
    return signal.lfilter(model.ma_polynomial, model.ar_polynomial, noise)[burn_in:]


def simulate_spectrum(omega: SpectrumGrid, N: int, seed: Optional[int] = None) -> np.ndarray:
    """
    Real Gaussian path with spectral density omega by frequency-domain synthesis

    Args:
        omega: target spectral density; its grid fixes the period of the path
        N: number of samples, at most omega.grid.K
        seed: random seed (settings default when omitted)

    Returns:
        Array of shape (N, m)
    """
    K = omega.grid.K
    if N > K:
        raise ConfigurationError(f"cannot draw {N} samples from a {K}-point grid")
    seed = get_settings().SEED if seed is None else seed
    rng = np.random.default_rng(seed)
    h, m = omega.grid.half_size, omega.dim
    xi = (rng.standard_normal((h, m)) + 1j * rng.standard_normal((h, m))) / np.sqrt(2.0)
    xi[0] = rng.standard_normal(m)
    xi[-1] = rng.standard_normal(m)
    root = spectra_service.spectrum_power(omega, 0.5).half_values
    half = (root @ xi[..., None])[..., 0]
    full = spectra_service.mirror_half(half, omega.grid)
    y = np.sqrt(K) * np.fft.ifft(full, axis=0)
    return y.real[:N]


# State covariances

def sample_state_covariance(bank: FilterBank, y: np.ndarray) -> np.ndarray:
    """(1/N) sum_k x_k x_k^T for x_{k+1} = A x_k + B y_k, x_0 = 0"""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] != bank.m:
        raise DimensionError(f"data of shape {y.shape} does not match an input dimension of {bank.m}")
    N = y.shape[0]
    if N < bank.n:
        raise TooFewSamples(f"{N} samples cannot estimate a {bank.n} x {bank.n} state covariance")
    system = (bank.A, bank.B, np.eye(bank.n), np.zeros((bank.n, bank.m)), 1)
    _, _, states = signal.dlsim(system, np.vstack([y, np.zeros((1, bank.m))]))
    states = states[1:]
    return states.T @ states / N


def exact_state_covariance(bank: FilterBank, omega: SpectrumGrid) -> np.ndarray:
    """Gamma(Omega) on the grid of omega"""
    return filterbank_service.gamma_op(filterbank_service.on_grid(bank, omega.grid), omega)


def arma_state_covariance(bank: FilterBank, model: ArmaModel) -> np.ndarray:
    """Stationary state covariance of the bank driven by the ARMA process, by a Lyapunov equation"""
    if bank.m != 1:
        raise DimensionError(f"ARMA input is scalar, bank has {bank.m} inputs")
    size = max(len(model.ar_polynomial), len(model.ma_polynomial))
    numerator = np.pad(model.ma_polynomial, (0, size - len(model.ma_polynomial)))
    denominator = np.pad(model.ar_polynomial, (0, size - len(model.ar_polynomial)))
    F, g, h, dd = signal.tf2ss(numerator, denominator)
    k = F.shape[0]
    A_aug = np.block([[F, np.zeros((k, bank.n))], [bank.B @ h, bank.A]])
    B_aug = np.vstack([g, bank.B * dd[0, 0]])
    P = linalg.solve_discrete_lyapunov(A_aug, model.variance * B_aug @ B_aug.T)
    return P[k:, k:]


# Targets and priors

def raised_cosine_edge(u: np.ndarray, width: float) -> np.ndarray:
    """0 below -width/2, 1 above width/2, half-period sine ramp in between"""
    s = np.clip(u / width, -0.5, 0.5)
    return 0.5 * (1.0 + np.sin(np.pi * s))


def bandpass_spectrum(target: BandpassTarget, grid: FrequencyGrid) -> SpectrumGrid:
    """R diag(floor + g_i s(theta)) R^T with a raised-cosine passband s and a plane rotation R"""
    theta = grid.half_theta
    shape = raised_cosine_edge(theta - target.low, target.transition) * raised_cosine_edge(
        target.high - theta, target.transition
    )
    gains = np.asarray(target.gains, dtype=float)
    m = gains.size
    profile = target.floor + gains[None, :] * shape[:, None]
    rotation = np.eye(m)
    if m >= 2:
        c, s = np.cos(target.mixing_angle), np.sin(target.mixing_angle)
        rotation[:2, :2] = [[c, -s], [s, c]]
    half = np.einsum("ij,hj,kj->hik", rotation, profile, rotation)
    return spectra_service.spectrum_from_half(half.astype(complex), grid)


def target_spectrum(target: Union[ArmaTarget, BandpassTarget], grid: FrequencyGrid) -> SpectrumGrid:
    if isinstance(target, ArmaTarget):
        return arma_spectrum(target.model(), grid)
    return bandpass_spectrum(target, grid)


def prior_spectrum(
    prior: PriorDescription,
    grid: FrequencyGrid,
    omega: Optional[SpectrumGrid] = None,
    data: Optional[np.ndarray] = None,
    m: Optional[int] = None,
) -> SpectrumGrid:
    """Prior Psi from its configuration form; target-based priors need omega"""
    if omega is not None:
        m = omega.dim
    if m is None:
        raise ConfigurationError("prior dimension unknown: pass the target spectrum or m")
    if omega is None and isinstance(prior, (TargetVariancePrior, TargetPrior)):
        raise ConfigurationError(f"{prior.type} prior needs a target spectrum")
    if isinstance(prior, IdentityPrior):
        return spectra_service.identity_spectrum(m, grid)
    if isinstance(prior, TargetVariancePrior):
        return spectra_service.constant_spectrum(spectra_service.integrate(omega).real, grid)
    if isinstance(prior, SampleVariancePrior):
        if data is None:
            raise ConfigurationError("sample_variance prior needs simulated data")
        y = np.asarray(data, dtype=float).reshape(len(data), -1)
        return spectra_service.constant_spectrum(y.T @ y / len(y), grid)
    if isinstance(prior, TargetPrior):
        return omega
    if isinstance(prior, ConstantPrior):
        value = np.asarray(prior.value, dtype=float)
        if value.shape != (m, m):
            raise DimensionError(f"constant prior of shape {value.shape} for a {m}-dimensional target")
        return spectra_service.constant_spectrum(value, grid)
    if isinstance(prior, RationalPrior):
        if m != 1:
            raise DimensionError(f"rational priors are scalar, target dimension is {m}")
        factor = RationalScalarFactor(numerator=prior.numerator, denominator=prior.denominator, gain=prior.gain)
        return spectra_service.rational_spectrum(factor, grid, prior.power)
    raise ConfigurationError(f"unknown prior {prior!r}")


def prior_degree(prior: PriorDescription, nu: int) -> Optional[int]:
    """McMillan degree of Psi^{1/nu} when it is rational, else None"""
    if isinstance(prior, (IdentityPrior, TargetVariancePrior, SampleVariancePrior, ConstantPrior)):
        return 0
    if isinstance(prior, RationalPrior) and prior.power % nu == 0:
        factor = RationalScalarFactor(numerator=prior.numerator, denominator=prior.denominator, gain=prior.gain)
        return 2 * factor.degree * prior.power // nu
    return None


# Diagnostics

def s_nu_diagnostic(phi: float, psi: float, nu: Union[int, float]) -> Tuple[float, float]:
    """
    Scalar integrand s_nu(phi, psi) and its derivative with respect to phi

    Args:
        phi: positive value of the estimate
        psi: positive value of the prior
        nu: divergence index, a positive integer or inf

    Returns:
        Tuple (s, s') with s(psi, psi) = 0
    """
    if phi <= 0.0 or psi <= 0.0:
        raise NonPositiveInput(f"s_nu needs positive arguments, got phi={phi}, psi={psi}")
    if nu == np.inf:
        return phi * np.log(phi / psi) - phi + psi, np.log(phi) - np.log(psi)
    beta = spectra_service.nu_to_beta(nu)
    slope = nu * (psi ** (-1.0 / nu) - phi ** (-1.0 / nu))
    if nu == 1:
        return np.log(psi / phi) + phi / psi - 1.0, slope
    value = (
        phi ** beta / (beta * (beta - 1.0))
        - phi * psi ** (beta - 1.0) / (beta - 1.0)
        + psi ** beta / beta
    )
    return value, slope


def degree_bound(nu: int, prior_degree: Optional[int], n: int) -> Optional[int]:
    """nu (deg Psi^{1/nu} + 2n), or None when Psi^{1/nu} is not rational"""
    if prior_degree is None:
        return None
    return nu * (prior_degree + 2 * n)


def rational_degree_diagnostic(
    phi: SpectrumGrid,
    bank: FilterBank,
    nu: int,
    order: Optional[int] = None,
    prior_degree_value: Optional[int] = 0,
) -> DegreeDiagnostic:
    """Fit Phi^{-1/nu} with a cosine polynomial of the given order and report the relative sup error"""
    if phi.dim != 1:
        raise DimensionError("the degree diagnostic is defined for scalar spectra")
    order = bank.n if order is None else order
    theta = phi.grid.half_theta
    values = phi.half_values[:, 0, 0].real
    design = np.cos(np.outer(theta, np.arange(order + 1)))
    coefficients, *_ = np.linalg.lstsq(design, values ** (-1.0 / nu), rcond=None)
    root = design @ coefficients
    if np.any(root <= 0.0):
        fit_error = np.inf
    else:
        fit_error = float(np.max(np.abs(root ** (-nu) - values)) / np.max(values))
    return DegreeDiagnostic(
        nu=nu,
        order=order,
        fit_error=fit_error,
        degree_bound=degree_bound(nu, prior_degree_value, bank.n),
    )


def maximum_entropy_spectrum(lags: np.ndarray, grid: FrequencyGrid) -> SpectrumGrid:
    """Yule-Walker AR(n-1) spectrum matching the autocovariances r_0 .. r_{n-1}"""
    lags = np.asarray(lags, dtype=float)
    if lags.size == 1:
        return spectra_service.constant_spectrum(lags[0], grid)
    ar = linalg.solve_toeplitz(lags[:-1], lags[1:])
    variance = lags[0] - np.dot(ar, lags[1:])
    if variance <= 0.0:
        raise NonPositiveInput(f"autocovariance sequence is not positive definite (innovation {variance:.3e})")
    return arma_spectrum(ArmaModel(ar=list(ar), variance=variance), grid)


# Pipelines

def _grid(config: ExperimentConfig) -> FrequencyGrid:
    return spectra_service.make_grid(config.grid_size)


def _estimate(
    config: ExperimentConfig,
    nu: int,
    bank: FilterBank,
    sigma: np.ndarray,
    psi: SpectrumGrid,
    basis: RangeGammaBasis,
) -> NuResult:
    whitened = filterbank_service.whiten(bank, sigma, basis)
    phi, report = spectapprox_service.newton_solve(
        psi,
        whitened,
        nu=nu,
        eps=config.eps,
        alpha=config.alpha,
        max_iter=config.max_iter,
    )
    height, frequency = spectra_service.peak(phi)
    degree = None
    if phi.dim == 1:
        degree = rational_degree_diagnostic(phi, bank, nu, prior_degree_value=prior_degree(config.prior, nu))
    return NuResult(
        nu=nu,
        phi=phi,
        report=report,
        divergence=report.divergence,
        residual=report.constraint_residual,
        peak=height,
        peak_frequency=frequency,
        degree=degree,
    )


def _map_nus(config: ExperimentConfig, fn) -> List[NuResult]:
    workers = min(get_settings().MAX_WORKERS, len(config.nus))
    if workers <= 1:
        return [fn(nu) for nu in config.nus]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, config.nus))


def run_known_sigma(config: ExperimentConfig) -> ExperimentResult:
    """Comparison procedure with the exact state covariance of the target"""
    settings = get_settings()
    grid = _grid(config)
    fine_grid = spectra_service.make_grid(max(settings.HIGH_RES_GRID_SIZE, grid.K))
    with timed(f"known_sigma[{config.name}]"):
        omega = target_spectrum(config.target, grid)
        bank = filterbank_service.build_bank(config.bank, grid)
        basis = filterbank_service.range_gamma_basis(bank)
        sigma = exact_state_covariance(bank, target_spectrum(config.target, fine_grid))
        if isinstance(config.target, ArmaTarget) and bank.m == 1:
            reference = arma_state_covariance(bank, config.target.model())
            discrepancy = np.linalg.norm(sigma - reference) / np.linalg.norm(reference)
            logger.info(f"{config.name}: quadrature vs Lyapunov state covariance, relative gap {discrepancy:.3e}")
        sigma = filterbank_service.project(basis, sigma)
        psi = prior_spectrum(config.prior, grid, omega)
        results = _map_nus(config, lambda nu: _estimate(config, nu, bank, sigma, psi, basis))
    return ExperimentResult(config=config, sigma=sigma, omega=omega, psi=psi, results=results)


def simulate_target(config: ExperimentConfig, omega: SpectrumGrid) -> np.ndarray:
    """Data path of length n_samples for the configured target"""
    seed = get_settings().SEED if config.seed is None else config.seed
    if isinstance(config.target, ArmaTarget):
        return simulate_arma(config.target.model(), config.n_samples, seed)[:, None]
    return simulate_spectrum(omega, config.n_samples, seed)


def run_data_driven(config: ExperimentConfig) -> ExperimentResult:
    """Estimation from a simulated finite sequence: covariance fit, whitening, approximation"""
    grid = _grid(config)
    with timed(f"data_driven[{config.name}]"):
        omega = target_spectrum(config.target, grid)
        y = simulate_target(config, omega)
        bank = filterbank_service.build_bank(config.bank, grid)
        basis = filterbank_service.range_gamma_basis(bank)
        sigma_c = sample_state_covariance(bank, y)
        logger.info(
            f"{config.name}: sample covariance V residual "
            f"{np.linalg.norm(filterbank_service.V_op(bank, sigma_c)):.3e}"
        )
        psi = prior_spectrum(config.prior, grid, omega, data=y)

        def estimate(nu: int) -> NuResult:
            fit = covfit_service.solve_covfit(
                sigma_c,
                bank,
                nu=config.covfit_nu or nu,
                max_iter=config.max_iter,
            )
            sigma = filterbank_service.project(basis, fit.P)
            return _estimate(config, nu, bank, sigma, psi, basis)

        results = _map_nus(config, estimate)
    return ExperimentResult(config=config, sigma=sigma_c, omega=omega, psi=psi, results=results)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    if config.mode == "data_driven":
        return run_data_driven(config)
    return run_known_sigma(config)


# Configuration files and outputs

def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.model_validate(spectra_service.load_json(path))


def load_experiment(name: str) -> ExperimentConfig:
    """One of the committed experiment configurations"""
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}, expected one of {', '.join(EXPERIMENTS)}")
    return load_experiment_config(CONFIG_DIR / f"{name}.json")


def write_experiment_outputs(result: ExperimentResult, out_dir: Union[str, Path]) -> List[Path]:
    """Spectra as CSV, one JSON report per nu and the summary table as JSON and CSV"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        spectra_service.write_spectrum_csv(result.omega, out_dir / "omega.csv"),
        spectra_service.write_spectrum_csv(result.psi, out_dir / "psi.csv"),
        spectra_service.write_matrix_csv(result.sigma, out_dir / "sigma.csv"),
    ]
    for item in result.results:
        written.append(spectra_service.write_spectrum_csv(item.phi, out_dir / f"phi_nu{item.nu}.csv"))
        report = item.report.model_dump(mode="json")
        report["peak"] = item.peak
        report["peak_frequency"] = item.peak_frequency
        if item.degree is not None:
            report["degree"] = item.degree.model_dump(mode="json")
        written.append(spectra_service.write_json(report, out_dir / f"report_nu{item.nu}.json"))
    summary = result.summary()
    written.append(
        spectra_service.write_json({"experiment": result.config.name, "results": summary}, out_dir / "summary.json")
    )
    path = out_dir / "summary.csv"
    pd.DataFrame(summary).to_csv(path, index=False, float_format="%.12g")
    written.append(path)
    logger.info(f"{result.config.name}: wrote {len(written)} files to {out_dir}")
    return written
