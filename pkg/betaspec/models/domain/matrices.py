import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class SpectralDecomposition(BaseModel):
    """Eigendecomposition X = U diag(d) U* with d sorted descending"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    U: np.ndarray
    d: np.ndarray

    @field_validator("U", "d")
    @classmethod
    def freeze_array(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value)
        value.setflags(write=False)
        return value

    @property
    def dim(self) -> int:
        return self.d.shape[-1]

    def reconstruct(self) -> np.ndarray:
        """Rebuild the source matrix from its factors"""
        return (self.U * self.d[..., None, :]) @ np.swapaxes(self.U.conj(), -1, -2)
