import math
from typing import Annotated, List, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from betaspec.models.domain.spectra import FrequencyGrid


class FilterBank(BaseModel):
    """Stable, reachable pair (A, B) with its frequency response G on a grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    B: np.ndarray
    grid: FrequencyGrid
    response: np.ndarray  # (K, n, m), G(e^{j theta_k}) = (e^{j theta_k} I - A)^{-1} B

    @field_validator("A", "B", "response")
    @classmethod
    def freeze_array(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value)
        value.setflags(write=False)
        return value

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def half_response(self) -> np.ndarray:
        return self.response[: self.grid.half_size]


class RangeGammaBasis(BaseModel):
    """Orthonormal basis (under <X, Y> = tr(XY)) of Range Gamma"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrices: np.ndarray  # (M, n, n)
    vectors: np.ndarray  # (M, n(n+1)/2), orthonormal symmetric coordinates

    @field_validator("matrices", "vectors")
    @classmethod
    def freeze_array(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=float)
        value.setflags(write=False)
        return value

    @property
    def size(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    def to_matrix(self, coordinates: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(coordinates, dtype=float), self.matrices, axes=1)


# Declarative bank descriptions

class Pole(BaseModel):
    """Eigenvalue radius*e^{j angle}; angles other than 0 and pi also place the conjugate"""
    radius: float = Field(ge=0.0)
    angle: float = 0.0

    @property
    def is_real(self) -> bool:
        return math.isclose(math.sin(self.angle), 0.0, abs_tol=1e-12)


class ExplicitBankDescription(BaseModel):
    type: Literal["explicit"] = "explicit"
    A: List[List[float]]
    B: List[List[float]]


class CovarianceExtensionBankDescription(BaseModel):
    """Delay-line bank; n is the number of lags, the state dimension is n*m"""
    type: Literal["covariance_extension"] = "covariance_extension"
    n: int = Field(ge=2)
    m: int = Field(default=1, ge=1)


class PoleBankDescription(BaseModel):
    type: Literal["pole_bank"] = "pole_bank"
    poles: List[Pole]
    B: Union[Literal["ones"], List[List[float]]] = "ones"


BankDescription = Annotated[
    Union[ExplicitBankDescription, CovarianceExtensionBankDescription, PoleBankDescription],
    Field(discriminator="type"),
]
