from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class TransportPlan(BaseModel):
    """Coupling between two weighted discrete measures"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    plan: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    tau: float = Field(..., ge=0, description="Entropic regularization, 0 for unregularized")
    cost_value: float
    entropic_value: float
    kl: float = Field(..., description="KL(plan || mu x nu)")
    converged: bool = True
    n_iter: int = Field(0, ge=0)
    marginal_error: float = Field(0.0, ge=0, description="L1 marginal violation after rounding")
    matching: Optional[np.ndarray] = Field(None, description="Column of each row for assignment plans")

    @property
    def shape(self):
        return self.plan.shape
