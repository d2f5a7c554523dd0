from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class MlpParams(BaseModel):
    """Weights of a fully connected network taking [x ; t] as input"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = Field("silu", pattern="^(silu|identity)$")

    @model_validator(mode="after")
    def check_layers(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("one bias per weight matrix required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input width does not match previous layer")
        return self

    @property
    def d(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def hidden(self) -> Tuple[int, ...]:
        return tuple(int(w.shape[1]) for w in self.weights[:-1])

    def tensors(self) -> List[np.ndarray]:
        """Parameters in [W0, b0, W1, b1, ...] order."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_tensors(cls, tensors: List[np.ndarray], activation: str = "silu") -> "MlpParams":
        return cls(weights=list(tensors[0::2]), biases=list(tensors[1::2]), activation=activation)


class AdamState(BaseModel):
    """First and second moments aligned with MlpParams.tensors()"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step: int = Field(0, ge=0)


class AdamHyper(BaseModel):
    lr: float = Field(1e-4, gt=0)
    weight_decay: float = Field(1e-2, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, ge=0)


class ModelBundle(BaseModel):
    """Drift and score networks with their optimizer state"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    drift: MlpParams
    score: MlpParams
    drift_state: AdamState
    score_state: AdamState
    sigma: float = Field(..., ge=0)

    @field_validator("drift", "score")
    @classmethod
    def validate_net(cls, v: MlpParams):
        if v.weights[0].shape[0] != v.d + 1:
            raise ValueError("network input must be d + 1 wide")
        return v

    @property
    def d(self) -> int:
        return self.drift.d
