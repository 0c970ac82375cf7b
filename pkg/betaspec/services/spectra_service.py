"""Spectral densities on the unit circle and the Beta divergence family.

Spectra of real processes satisfy Phi(e^{-j theta}) = conj(Phi(e^{j theta})),
so pointwise maps are evaluated for theta in [0, pi] and mirrored.
"""
import json
import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    ConfigurationError,
    GridMismatch,
    InvalidSpectrum,
    NegativeDivergence,
    ParseError,
)
from betaspec.models.domain.spectra import FrequencyGrid, RationalScalarFactor, SpectrumGrid
from betaspec.services import matfun_service

logger = logging.getLogger(__name__)

# divergences below zero by less than this, relative to the trace scale, are rounding
DIVERGENCE_ROUNDOFF = 1e-10


def make_grid(K: Optional[int] = None) -> FrequencyGrid:
    """Frequency grid of size K (settings default when omitted)"""
    return FrequencyGrid(K=K or get_settings().GRID_SIZE)


def mirror_half(half_values: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """Extend values on theta in [0, pi] to the full circle: out[K-k] = conj(out[k])"""
    K = grid.K
    out = np.empty((K,) + half_values.shape[1:], dtype=complex)
    out[: K // 2 + 1] = half_values
    out[K // 2 + 1:] = np.conj(half_values[1: K // 2][::-1])
    return out


def spectrum_from_half(half_values: np.ndarray, grid: FrequencyGrid) -> SpectrumGrid:
    half_values = np.asarray(half_values, dtype=complex)
    if half_values.ndim == 1:
        half_values = half_values[:, None, None]
    half_values = matfun_service.hermitian_part(half_values)
    # the endpoints theta = 0 and theta = pi carry real values
    half_values[0] = half_values[0].real
    half_values[-1] = half_values[-1].real
    return SpectrumGrid(grid=grid, values=mirror_half(half_values, grid))


def pointwise(phi: SpectrumGrid, fn: Callable[[np.ndarray], np.ndarray]) -> SpectrumGrid:
    """Apply a batched matrix map to every grid value"""
    return spectrum_from_half(fn(phi.half_values), phi.grid)


def constant_spectrum(value: Union[float, np.ndarray], grid: FrequencyGrid) -> SpectrumGrid:
    value = np.atleast_2d(np.asarray(value, dtype=complex))
    return spectrum_from_half(np.broadcast_to(value, (grid.half_size,) + value.shape), grid)


def identity_spectrum(m: int, grid: FrequencyGrid) -> SpectrumGrid:
    return constant_spectrum(np.eye(m), grid)


def spectrum_from_function(fn: Callable[[np.ndarray], np.ndarray], grid: FrequencyGrid) -> SpectrumGrid:
    """Sample fn(theta) -> (len(theta), m, m) on [0, pi] and mirror"""
    return spectrum_from_half(fn(grid.half_theta), grid)


def rational_spectrum(factor: RationalScalarFactor, grid: FrequencyGrid, power: float = 1.0) -> SpectrumGrid:
    """|W(e^{j theta})|^{2 power} by direct evaluation of the transfer function"""
    response = factor.evaluate(np.exp(1j * grid.half_theta))
    return spectrum_from_half(np.abs(response) ** (2.0 * power), grid)


def check_symmetry(phi: SpectrumGrid, tol: float = 1e-10) -> None:
    """Real-process symmetry: Phi at 2*pi - theta is the transpose of Phi at theta"""
    values = phi.values
    mirrored = np.conj(values[1:][::-1])
    scale = max(1.0, float(np.max(np.abs(values))))
    error = float(np.max(np.abs(values[1:] - mirrored))) if len(mirrored) else 0.0
    if error > tol * scale:
        raise InvalidSpectrum(f"spectrum violates real-process symmetry by {error:.3e}")


def check_coercive(phi: SpectrumGrid) -> None:
    """Raise NotPositiveDefinite naming the first grid index with a non-PD value"""
    matfun_service.check_positive_definite(phi.half_values)


def spectrum_power(phi: SpectrumGrid, c: float) -> SpectrumGrid:
    """Pointwise Phi^c"""
    return pointwise(phi, lambda values: matfun_service.herm_power(values, c))


def spectrum_log(phi: SpectrumGrid) -> SpectrumGrid:
    """Pointwise log Phi; Phi must be PD on the whole grid"""
    return pointwise(phi, matfun_service.matrix_log)


def spectrum_exp(phi: SpectrumGrid) -> SpectrumGrid:
    """Pointwise exp of a Hermitian (not necessarily PD) spectrum"""
    return pointwise(phi, matfun_service.matrix_exp)


def integrate(F: Union[SpectrumGrid, np.ndarray]) -> np.ndarray:
    """Normalized integral over the unit circle: the mean over the uniform grid"""
    values = F.values if isinstance(F, SpectrumGrid) else np.asarray(F)
    return values.mean(axis=0)


def peak(phi: SpectrumGrid) -> tuple:
    """Largest eigenvalue over the grid and the frequency where it occurs"""
    top = np.linalg.eigvalsh(phi.half_values)[:, -1]
    index = int(np.argmax(top))
    return float(top[index]), float(phi.grid.half_theta[index])


# Divergences

def nu_to_beta(nu: Union[int, float]) -> float:
    """beta = 1 - 1/nu; nu = inf maps to the Kullback-Leibler end"""
    if nu == math.inf:
        return 1.0
    if nu < 1 or int(nu) != nu:
        raise ConfigurationError(f"nu must be a positive integer, got {nu}")
    return 1.0 - 1.0 / nu


def beta_trace_density(phi: np.ndarray, psi: np.ndarray, beta: float) -> np.ndarray:
    """Pointwise trace integrand of the Beta divergence for stacks of PD matrices

    Args:
        phi: Hermitian PD matrices, shape (..., m, m)
        psi: Hermitian PD matrices of the same shape
        beta: divergence parameter; values within the singular tolerance of 0 and 1
            use the Itakura-Saito and Kullback-Leibler limits

    Returns:
        Real array of shape (...)
    """
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    tol = get_settings().BETA_SINGULAR_TOL
    m = phi.shape[-1]
    if abs(beta) < tol:
        matfun_service.check_positive_definite(phi)
        matfun_service.check_positive_definite(psi)
        logdet_phi = np.sum(np.log(np.linalg.eigvalsh(phi)), axis=-1)
        logdet_psi = np.sum(np.log(np.linalg.eigvalsh(psi)), axis=-1)
        ratio = np.trace(np.linalg.solve(psi, phi), axis1=-2, axis2=-1)
        return np.real(logdet_psi - logdet_phi + ratio - m)
    if abs(beta - 1.0) < tol:
        log_gap = matfun_service.matrix_log(phi) - matfun_service.matrix_log(psi)
        return np.real(
            np.trace(phi @ log_gap, axis1=-2, axis2=-1)
            - np.trace(phi, axis1=-2, axis2=-1)
            + np.trace(psi, axis1=-2, axis2=-1)
        )
    phi_beta = matfun_service.herm_power(phi, beta)
    psi_beta = matfun_service.herm_power(psi, beta)
    psi_beta_minus = matfun_service.herm_power(psi, beta - 1.0)
    integrand = (phi_beta - phi @ psi_beta_minus) / (beta - 1.0) - (phi_beta - psi_beta) / beta
    return np.real(np.trace(integrand, axis1=-2, axis2=-1))


def _check_pair(phi: SpectrumGrid, psi: SpectrumGrid) -> None:
    if phi.grid.K != psi.grid.K:
        raise GridMismatch(f"grid sizes differ: {phi.grid.K} vs {psi.grid.K}")
    if phi.dim != psi.dim:
        raise GridMismatch(f"spectrum dimensions differ: {phi.dim} vs {psi.dim}")


def _integrate_density(phi: SpectrumGrid, density: np.ndarray) -> float:
    return float(np.dot(phi.grid.half_weights, density))


def clamp_roundoff(value: float, scale: float, label: str = "divergence") -> float:
    """Map rounding-level negative divergences to zero

    Raises:
        NegativeDivergence: value is below -DIVERGENCE_ROUNDOFF * (1 + scale)
    """
    if value >= 0.0:
        return value
    if value < -DIVERGENCE_ROUNDOFF * (1.0 + abs(scale)):
        raise NegativeDivergence(f"{label} evaluated to {value:.3e} (trace scale {scale:.3e})")
    return 0.0


def beta_divergence(phi: SpectrumGrid, psi: SpectrumGrid, beta: float) -> float:
    """Multivariate Beta divergence S_beta(Phi || Psi); rounding-level negatives read as zero"""
    _check_pair(phi, psi)
    density = beta_trace_density(phi.half_values, psi.half_values, beta)
    trace = np.real(np.trace(phi.half_values + psi.half_values, axis1=-2, axis2=-1))
    value = _integrate_density(phi, density)
    return clamp_roundoff(value, _integrate_density(phi, trace), f"S_beta(beta={beta})")


def is_divergence(phi: SpectrumGrid, psi: SpectrumGrid) -> float:
    """Multivariate Itakura-Saito distance"""
    return beta_divergence(phi, psi, 0.0)


def kl_divergence(phi: SpectrumGrid, psi: SpectrumGrid) -> float:
    """Kullback-Leibler divergence extended to spectra of unequal trace"""
    return beta_divergence(phi, psi, 1.0)


def nu_divergence(phi: SpectrumGrid, psi: SpectrumGrid, nu: Union[int, float]) -> float:
    """S_nu = S_beta with beta = 1 - 1/nu"""
    return beta_divergence(phi, psi, nu_to_beta(nu))


def kl0_divergence(phi: SpectrumGrid, psi: SpectrumGrid) -> float:
    """Kullback-Leibler divergence for spectra with the same trace integral"""
    _check_pair(phi, psi)
    log_gap = spectrum_log(phi).half_values - spectrum_log(psi).half_values
    density = np.real(np.trace(phi.half_values @ log_gap, axis1=-2, axis2=-1))
    return _integrate_density(phi, density)


def l2_divergence(phi: SpectrumGrid, psi: SpectrumGrid) -> float:
    """Squared L2 distance of spectra; S_2 = l2 / 2"""
    _check_pair(phi, psi)
    gap = phi.half_values - psi.half_values
    return _integrate_density(phi, matfun_service.inner(gap, gap))


# Serialization

def _column_names(m: int) -> List[str]:
    re = [f"re({i + 1},{j + 1})" for i in range(m) for j in range(m)]
    im = [f"im({i + 1},{j + 1})" for i in range(m) for j in range(m)]
    return ["theta"] + re + im


def spectrum_to_frame(phi: SpectrumGrid) -> pd.DataFrame:
    m = phi.dim
    flat = phi.values.reshape(phi.grid.K, m * m)
    data = np.column_stack([phi.grid.theta, flat.real, flat.imag])
    return pd.DataFrame(data, columns=_column_names(m))


def _validated_spectrum(theta: np.ndarray, values: np.ndarray, source: str) -> SpectrumGrid:
    try:
        grid = FrequencyGrid(K=len(theta))
    except ValidationError as e:
        raise ParseError(f"{source}: {e.errors()[0]['msg']}")
    if not np.allclose(theta, grid.theta, rtol=0.0, atol=1e-9):
        raise ParseError(f"{source}: theta column is not the uniform grid 2*pi*k/{grid.K}")
    scale = max(1.0, float(np.max(np.abs(values))))
    asymmetry = float(np.max(np.abs(values - np.conj(np.swapaxes(values, -1, -2)))))
    if asymmetry > 1e-10 * scale:
        raise InvalidSpectrum(f"{source}: values are not Hermitian (error {asymmetry:.3e})")
    phi = SpectrumGrid(grid=grid, values=matfun_service.hermitian_part(values))
    check_symmetry(phi)
    check_coercive(phi)
    return phi


def spectrum_from_frame(frame: pd.DataFrame, source: str = "spectrum") -> SpectrumGrid:
    """Parse the theta / re(i,j) / im(i,j) layout"""
    n_columns = frame.shape[1] - 1
    m = int(round(math.sqrt(n_columns / 2))) if n_columns > 0 else 0
    if m < 1 or list(frame.columns) != _column_names(m):
        raise ParseError(f"{source}: unexpected columns {list(frame.columns)[:5]}...")
    data = frame.to_numpy(dtype=float)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{source}: non-finite entries")
    flat = data[:, 1: 1 + m * m] + 1j * data[:, 1 + m * m:]
    return _validated_spectrum(data[:, 0], flat.reshape(-1, m, m), source)


def write_spectrum_csv(phi: SpectrumGrid, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spectrum_to_frame(phi).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote spectrum K={phi.grid.K} m={phi.dim} to {path}")
    return path


def read_spectrum_csv(path: Union[str, Path]) -> SpectrumGrid:
    """Read and validate a spectrum CSV

    Raises:
        ParseError: missing file, malformed layout or non-uniform grid
        InvalidSpectrum: non-Hermitian values or broken real-process symmetry
        NotPositiveDefinite: a value is not PD (the message names the grid index)
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read spectrum {path}: {str(e)}")
    except ValueError as e:
        raise ParseError(f"cannot parse spectrum {path}: {str(e)}")
    return spectrum_from_frame(frame, source=str(path))


def spectrum_to_json(phi: SpectrumGrid) -> dict:
    return {
        "K": phi.grid.K,
        "dim": phi.dim,
        "theta": phi.grid.theta.tolist(),
        "re": phi.values.real.tolist(),
        "im": phi.values.imag.tolist(),
    }


def spectrum_from_json(payload: dict, source: str = "spectrum") -> SpectrumGrid:
    try:
        theta = np.asarray(payload["theta"], dtype=float)
        values = np.asarray(payload["re"], dtype=float) + 1j * np.asarray(payload["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{source}: malformed spectrum JSON ({str(e)})")
    if values.ndim != 3 or values.shape[0] != theta.shape[0]:
        raise ParseError(f"{source}: values of shape {values.shape} do not match theta")
    return _validated_spectrum(theta, values, source)


def write_spectrum_json(phi: SpectrumGrid, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(spectrum_to_json(phi)))
    return path


def read_spectrum_json(path: Union[str, Path]) -> SpectrumGrid:
    return spectrum_from_json(load_json(path), source=str(path))


def read_spectrum(path: Union[str, Path]) -> SpectrumGrid:
    """Dispatch on extension: .json or CSV"""
    if str(path).endswith(".json"):
        return read_spectrum_json(path)
    return read_spectrum_csv(path)


def load_json(path: Union[str, Path]) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {str(e)}")
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in {path}: {str(e)}")


def write_json(payload: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))
    return path


def read_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """Headerless CSV of a real square matrix"""
    try:
        frame = pd.read_csv(path, header=None, float_precision="round_trip")
        matrix = frame.to_numpy(dtype=float)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read matrix {path}: {str(e)}")
    except ValueError as e:
        raise ParseError(f"cannot parse matrix {path}: {str(e)}")
    if matrix.shape[0] != matrix.shape[1] or not np.all(np.isfinite(matrix)):
        raise ParseError(f"{path}: expected a finite square matrix, got shape {matrix.shape}")
    return matrix


def write_matrix_csv(matrix: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(np.asarray(matrix, dtype=float)).to_csv(path, header=False, index=False, float_format="%.17g")
    return path
