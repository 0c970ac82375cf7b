from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from betaspec.core.exceptions import ConfigurationError


class FrequencyGrid(BaseModel):
    """Uniform grid theta_k = 2*pi*k/K on the unit circle"""
    model_config = ConfigDict(frozen=True)

    K: int

    @field_validator("K")
    @classmethod
    def check_size(cls, value: int) -> int:
        if value < 64 or value & (value - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {value}")
        return value

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.K) / self.K

    @property
    def half_size(self) -> int:
        """Number of points with theta in [0, pi]"""
        return self.K // 2 + 1

    @property
    def half_theta(self) -> np.ndarray:
        return self.theta[: self.half_size]

    @property
    def half_weights(self) -> np.ndarray:
        """Quadrature weights reproducing the full-grid mean from [0, pi] values
        of a function symmetric under theta -> 2*pi - theta"""
        weights = np.full(self.half_size, 2.0 / self.K)
        weights[0] = weights[-1] = 1.0 / self.K
        return weights


class SpectrumGrid(BaseModel):
    """m x m Hermitian spectral density sampled on a FrequencyGrid"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: FrequencyGrid
    values: np.ndarray

    @field_validator("values")
    @classmethod
    def freeze_values(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=complex)
        if value.ndim != 3 or value.shape[1] != value.shape[2]:
            raise ValueError(f"spectrum values must have shape (K, m, m), got {value.shape}")
        value.setflags(write=False)
        return value

    @model_validator(mode="after")
    def check_grid(self) -> "SpectrumGrid":
        if self.values.shape[0] != self.grid.K:
            raise ValueError(
                f"spectrum has {self.values.shape[0]} values for a grid of size {self.grid.K}"
            )
        return self

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def half_values(self) -> np.ndarray:
        return self.values[: self.grid.half_size]


class RationalScalarFactor(BaseModel):
    """Scalar rational function W(z) = num(z) / den(z), coefficients in descending powers of z"""
    model_config = ConfigDict(frozen=True)

    numerator: List[float]
    denominator: List[float]
    gain: float = 1.0
    outer: bool = True

    @model_validator(mode="after")
    def check_outer(self) -> "RationalScalarFactor":
        if not any(self.denominator):
            raise ConfigurationError("denominator polynomial is identically zero")
        if self.outer and len(self.denominator) > 1:
            roots = np.roots(self.denominator)
            if np.any(np.abs(roots) >= 1.0):
                raise ConfigurationError(
                    f"outer factor has poles outside the open unit disc: {roots}"
                )
        return self

    @property
    def degree(self) -> int:
        """McMillan degree of W"""
        return max(len(np.trim_zeros(self.numerator, "f")), len(np.trim_zeros(self.denominator, "f"))) - 1

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self.gain * np.polyval(self.numerator, z) / np.polyval(self.denominator, z)
