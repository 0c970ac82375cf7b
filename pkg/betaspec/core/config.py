from functools import lru_cache

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical defaults loaded from environment variables"""
    # Grid Settings
    GRID_SIZE: int = 2048
    HIGH_RES_GRID_SIZE: int = 8192

    # Matrix Function Settings
    EIG_FLOOR: float = 1e-12
    DIVIDED_DIFFERENCE_TOL: float = 1e-8
    BETA_SINGULAR_TOL: float = 1e-8

    # Spectrum Approximation Solver
    NEWTON_EPS: float = 1e-9
    NEWTON_ALPHA: float = 0.25
    NEWTON_MAX_ITER: int = 100
    NEWTON_MAX_BACKTRACK: int = 60
    LSTSQ_RCOND: float = 1e-10

    # Covariance Fitting Solver
    COV_EPS: float = 1e-9
    COV_MAX_ITER: int = 200

    # Filter Bank Settings
    STABILITY_MARGIN: float = 1e-9
    BASIS_DROP_TOL: float = 1e-10
    RANGE_TOL: float = 1e-6

    # Experiment Settings
    SEED: int = 0
    MAX_WORKERS: int = 3
    OUTPUT_DIR: str = "results"
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="BETASPEC_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("GRID_SIZE", "HIGH_RES_GRID_SIZE")
    @classmethod
    def check_grid_size(cls, value: int) -> int:
        if value < 64 or value & (value - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {value}")
        return value

    @field_validator("NEWTON_ALPHA")
    @classmethod
    def check_alpha(cls, value: float) -> float:
        if not 0.0 < value < 0.5:
            raise ValueError(f"backtracking alpha must lie in (0, 1/2), got {value}")
        return value

    @property
    def newton_options(self) -> dict:
        """Keyword defaults shared by both Newton solvers"""
        return {
            "eps": self.NEWTON_EPS,
            "alpha": self.NEWTON_ALPHA,
            "max_iter": self.NEWTON_MAX_ITER,
            "max_backtrack": self.NEWTON_MAX_BACKTRACK,
        }


@lru_cache()
def get_settings() -> Settings:
    """Cached settings instance to avoid reloading environment variables"""
    return Settings()
