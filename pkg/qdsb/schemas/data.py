import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class PointCloud(BaseModel):
    """Finite set of points in R^d with uniform empirical weights"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray

    @field_validator("points", mode="before")
    @classmethod
    def validate_points(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise ValueError("points must have dimension d >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("points must be finite")
        arr.setflags(write=False)
        return arr

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n) if self.n else np.zeros(0)

    def subset(self, indices) -> "PointCloud":
        return PointCloud(points=self.points[np.asarray(indices)])

    def head(self, count: int) -> "PointCloud":
        return PointCloud(points=self.points[: min(count, self.n)])
