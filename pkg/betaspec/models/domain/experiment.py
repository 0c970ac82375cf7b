from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from betaspec.core.exceptions import UnstableModel
from betaspec.models.domain.filterbank import BankDescription
from betaspec.models.domain.solver import DegreeDiagnostic, SolverReport
from betaspec.models.domain.spectra import SpectrumGrid


class ArmaModel(BaseModel):
    """y(t) = sum_i a_i y(t-i) + sum_j b_j e(t-j), e white with the given variance"""
    model_config = ConfigDict(frozen=True)

    ar: List[float] = []
    ma: List[float] = [1.0]
    variance: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def check_stable(self) -> "ArmaModel":
        if self.ar:
            roots = np.roots(self.ar_polynomial)
            if np.any(np.abs(roots) >= 1.0):
                raise UnstableModel(
                    f"AR polynomial roots must lie inside the unit circle, got |roots| = {np.abs(roots)}"
                )
        return self

    @property
    def ar_polynomial(self) -> np.ndarray:
        """Coefficients of 1 - sum_i a_i z^{-i}"""
        return np.r_[1.0, -np.asarray(self.ar, dtype=float)]

    @property
    def ma_polynomial(self) -> np.ndarray:
        return np.asarray(self.ma, dtype=float)

    @property
    def p(self) -> int:
        return len(self.ar)

    @property
    def q(self) -> int:
        return max(len(self.ma) - 1, 0)


# Target spectra

class ArmaTarget(BaseModel):
    type: Literal["arma"] = "arma"
    ar: List[float] = []
    ma: List[float] = [1.0]
    variance: float = 1.0

    def model(self) -> ArmaModel:
        return ArmaModel(ar=self.ar, ma=self.ma, variance=self.variance)


class BandpassTarget(BaseModel):
    """Raised-cosine bandpass profile diag(floor + g_i s(theta)), mixed by a rotation"""
    type: Literal["bandpass"] = "bandpass"
    low: float = Field(gt=0.0)
    high: float = Field(lt=np.pi)
    floor: float = Field(default=2e-3, gt=0.0)
    transition: float = Field(default=0.2, gt=0.0)
    gains: List[float] = [1.0]
    mixing_angle: float = 0.0

    @model_validator(mode="after")
    def check_band(self) -> "BandpassTarget":
        if self.low >= self.high:
            raise ValueError(f"band edges must satisfy low < high, got {self.low}, {self.high}")
        return self


TargetDescription = Annotated[Union[ArmaTarget, BandpassTarget], Field(discriminator="type")]


# Prior spectra

class IdentityPrior(BaseModel):
    type: Literal["identity"] = "identity"


class TargetVariancePrior(BaseModel):
    """Constant prior equal to the integral of the target spectrum"""
    type: Literal["target_variance"] = "target_variance"


class SampleVariancePrior(BaseModel):
    """Constant prior equal to the sample variance of the data"""
    type: Literal["sample_variance"] = "sample_variance"


class TargetPrior(BaseModel):
    """Prior equal to the target itself"""
    type: Literal["target"] = "target"


class ConstantPrior(BaseModel):
    type: Literal["constant"] = "constant"
    value: List[List[float]]


class RationalPrior(BaseModel):
    """|W(e^{j theta})|^{2 power} for a scalar rational factor W"""
    type: Literal["rational"] = "rational"
    numerator: List[float]
    denominator: List[float]
    gain: float = 1.0
    power: int = Field(default=1, ge=1)


PriorDescription = Annotated[
    Union[IdentityPrior, TargetVariancePrior, SampleVariancePrior, TargetPrior, ConstantPrior, RationalPrior],
    Field(discriminator="type"),
]


class ExperimentConfig(BaseModel):
    """One reproducible estimation scenario"""
    name: str
    mode: Literal["known_sigma", "data_driven"] = "known_sigma"
    bank: BankDescription
    target: TargetDescription
    prior: PriorDescription = TargetVariancePrior()
    nus: List[int] = [1, 2, 3]
    grid_size: Optional[int] = None
    seed: Optional[int] = None
    n_samples: Optional[int] = Field(default=None, ge=1)
    covfit_nu: Optional[int] = Field(default=None, ge=1)
    eps: Optional[float] = Field(default=None, gt=0.0)
    alpha: Optional[float] = Field(default=None, gt=0.0, lt=0.5)
    max_iter: Optional[int] = Field(default=None, ge=1)

    @field_validator("nus")
    @classmethod
    def check_nus(cls, value: List[int]) -> List[int]:
        if not value or any(nu < 1 for nu in value):
            raise ValueError(f"nu values must be integers >= 1, got {value}")
        return value

    @field_validator("grid_size")
    @classmethod
    def check_grid_size(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and (value < 64 or value & (value - 1)):
            raise ValueError(f"grid size must be a power of two >= 64, got {value}")
        return value

    @model_validator(mode="after")
    def check_samples(self) -> "ExperimentConfig":
        if self.mode == "data_driven" and self.n_samples is None:
            raise ValueError("data_driven experiments need n_samples")
        return self


class NuResult(BaseModel):
    """Estimate and diagnostics for one value of nu"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    nu: int
    phi: SpectrumGrid
    report: SolverReport
    divergence: float
    residual: float
    peak: float
    peak_frequency: float
    degree: Optional[DegreeDiagnostic] = None

    @property
    def iterations(self) -> int:
        return self.report.iteration_count


class ExperimentResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    sigma: np.ndarray
    omega: SpectrumGrid
    psi: SpectrumGrid
    results: List[NuResult]

    def summary(self) -> List[dict]:
        """Rows of {nu, divergence, residual, peak, iterations}"""
        return [
            {
                "nu": result.nu,
                "divergence": result.divergence,
                "residual": result.residual,
                "peak": result.peak,
                "iterations": result.iterations,
            }
            for result in self.results
        ]
