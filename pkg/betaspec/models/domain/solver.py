from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator


class IterationRecord(BaseModel):
    """One Newton iteration: state before the step and the accepted step size"""
    iteration: int
    value: float
    gradient_norm: float
    step_size: float
    margin: float


class NewtonTrace(BaseModel):
    """Iterate history of the shared damped Newton loop"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[IterationRecord] = []
    x: np.ndarray
    converged: bool = False

    @property
    def iterations(self) -> int:
        """Number of accepted Newton steps"""
        return sum(1 for record in self.records if record.step_size > 0.0)

    @field_serializer("x")
    def serialize_x(self, x: np.ndarray) -> list:
        return x.tolist()


class Multiplier(BaseModel):
    """Lagrange multiplier in Range Gamma with its admissibility margin"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lam: np.ndarray
    coordinates: np.ndarray
    margin: float

    @field_validator("lam", "coordinates")
    @classmethod
    def freeze_array(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=float)
        value.setflags(write=False)
        return value

    @field_serializer("lam", "coordinates")
    def serialize_array(self, value: np.ndarray) -> list:
        return value.tolist()


class SolverReport(BaseModel):
    """Outcome of a spectrum approximation solve"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    nu: int
    divergence_type: Literal["beta", "kl"] = "beta"
    iterations: List[IterationRecord]
    multiplier: Multiplier
    constraint_residual: float
    divergence: float
    converged: bool = True

    @property
    def iteration_count(self) -> int:
        return sum(1 for record in self.iterations if record.step_size > 0.0)


class CovDualPoint(BaseModel):
    """Dual variable of the covariance fit, kept in [ker V*]^perp"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    delta: np.ndarray
    certificate: float

    @field_validator("delta")
    @classmethod
    def freeze_delta(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=float)
        value.setflags(write=False)
        return value

    @field_serializer("delta")
    def serialize_delta(self, value: np.ndarray) -> list:
        return value.tolist()


class CovFitResult(BaseModel):
    """Structured covariance estimate P with V(P) = 0"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    P: np.ndarray
    dual: CovDualPoint
    divergence: float
    residual: float
    nu: int
    divergence_type: Literal["beta", "kl"] = "beta"
    iterations: List[IterationRecord] = []
    converged: bool = True

    @field_serializer("P")
    def serialize_p(self, value: np.ndarray) -> list:
        return value.tolist()

    @property
    def iteration_count(self) -> int:
        return sum(1 for record in self.iterations if record.step_size > 0.0)


class DegreeDiagnostic(BaseModel):
    """Rational-order report for a scalar estimate"""
    nu: int
    order: int
    fit_error: float
    degree_bound: Optional[int] = None
