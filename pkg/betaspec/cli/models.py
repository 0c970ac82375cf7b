from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, FilePath, field_validator, model_validator

from betaspec.models.domain.experiment import PriorDescription
from betaspec.models.domain.filterbank import BankDescription
from betaspec.services import spectra_service


class Overrides(BaseModel):
    """Numeric overrides shared by the solver subcommands"""
    grid: Optional[int] = None
    eps: Optional[float] = Field(default=None, gt=0.0)
    alpha: Optional[float] = Field(default=None, gt=0.0, lt=0.5)
    max_iter: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)

    @field_validator("grid")
    @classmethod
    def check_grid(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and (value < 64 or value & (value - 1)):
            raise ValueError(f"grid size must be a power of two >= 64, got {value}")
        return value


class DivergenceRequest(BaseModel):
    phi: FilePath
    psi: FilePath
    beta: Optional[float] = None
    nu: Optional[int] = Field(default=None, ge=1)
    kl: bool = False
    itakura_saito: bool = False

    @property
    def resolved_beta(self) -> float:
        if self.kl:
            return 1.0
        if self.itakura_saito:
            return 0.0
        if self.nu is not None:
            return spectra_service.nu_to_beta(self.nu)
        return self.beta


class CovfitRequest(Overrides):
    sigma: FilePath
    bank: FilePath
    nu: int = Field(default=1, ge=1)
    kl: bool = False
    out: Path


class EstimateRequest(Overrides):
    psi: Optional[FilePath] = None
    psi_config: Optional[FilePath] = None
    bank: FilePath
    sigma: FilePath
    nus: List[int] = [1]
    fit_cov: bool = False
    kl: bool = False
    out: Path

    @field_validator("nus")
    @classmethod
    def check_nus(cls, value: List[int]) -> List[int]:
        if any(nu < 1 for nu in value):
            raise ValueError(f"nu values must be integers >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def check_prior_source(self) -> "EstimateRequest":
        if (self.psi is None) == (self.psi_config is None):
            raise ValueError("give exactly one of --psi and --psi-config")
        return self


class ReproduceRequest(Overrides):
    experiment: Optional[str] = None
    config: Optional[FilePath] = None
    nus: Optional[List[int]] = None
    out: Optional[Path] = None


# Configuration files

class BankFile(BaseModel):
    """Bank configuration file: a bank description, optionally wrapped as {"bank": ...}"""
    bank: BankDescription
    grid_size: Optional[int] = None

    @classmethod
    def load(cls, path: Path) -> "BankFile":
        payload = spectra_service.load_json(path)
        if isinstance(payload, dict) and "bank" not in payload:
            payload = {"bank": payload}
        return cls.model_validate(payload)


class PriorFile(BaseModel):
    prior: PriorDescription

    @classmethod
    def load(cls, path: Path) -> "PriorFile":
        payload = spectra_service.load_json(path)
        if isinstance(payload, dict) and "prior" not in payload:
            payload = {"prior": payload}
        return cls.model_validate(payload)


# Outputs

class EstimateSummary(BaseModel):
    """One line of the estimate / reproduce summary printed on stdout"""
    label: str
    divergence_type: Literal["beta", "kl"] = "beta"
    divergence: float
    residual: float
    iterations: int
    peak: float
    spectrum: str
    report: str
