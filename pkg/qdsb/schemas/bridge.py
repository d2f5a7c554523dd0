import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class BridgeSample(BaseModel):
    """Batch of Brownian bridge draws with their regression targets.

    Every array has one leading row per draw.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    x: np.ndarray
    noise: np.ndarray
    u_target: np.ndarray
    s_target: np.ndarray
    lam: np.ndarray
    sigma: float = Field(..., ge=0)

    @property
    def size(self) -> int:
        return int(self.t.shape[0])
