from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qdsb.schemas.data import PointCloud


class AnchorQuantization(BaseModel):
    """Anchors selected from a cloud and the Voronoi cells they induce"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    cloud: PointCloud
    anchor_indices: np.ndarray = Field(..., description="Sample index of each anchor slot")
    anchors: np.ndarray = Field(..., description="k x d anchor coordinates")
    assignment: np.ndarray = Field(..., description="Anchor slot of every sample")
    distances: np.ndarray = Field(..., description="Distance of every sample to its anchor")
    cells: List[np.ndarray]
    masses: np.ndarray
    coverage_radius: float = Field(..., ge=0)
    quant_error: float = Field(..., ge=0)
    exponent: float = Field(..., ge=1)

    @model_validator(mode="after")
    def check_consistency(self):
        k = len(self.anchor_indices)
        if self.anchors.shape != (k, self.cloud.d):
            raise ValueError("anchors must be k x d")
        if len(self.cells) != k or self.masses.shape != (k,):
            raise ValueError("one cell and one mass per anchor required")
        if self.assignment.shape != (self.cloud.n,):
            raise ValueError("assignment must cover every sample")
        return self

    @property
    def k(self) -> int:
        return int(len(self.anchor_indices))

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(cell) for cell in self.cells], dtype=np.int64)
