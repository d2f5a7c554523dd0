import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from qdsb.core.config import settings

METRICS_COLUMNS = ["epoch", "train_seconds", "mmd", "loss"]
TASKS_PATTERN = "^(8g-moons|g-moons|g-8g|csv)$"


class TrainConfig(BaseModel):
    """Hyperparameters of one training run"""
    model_config = ConfigDict(extra="forbid")

    sigma: float = Field(0.25, gt=0, description="Reference Brownian noise level")
    tau: Optional[float] = Field(None, gt=0, description="Entropic regularization; defaults to 2 sigma^2")
    anchors_k: int = Field(256, ge=1)
    refresh_epochs: int = Field(100, ge=0, description="Anchor refresh period; 0 disables refresh")
    epochs: int = Field(500, ge=0)
    batch_size: int = Field(256, ge=1)
    lr: float = Field(1e-4, gt=0)
    weight_decay: float = Field(1e-2, ge=0)
    eval_every: int = Field(10, ge=1)
    eval_points: int = Field(4096, ge=1)
    em_steps: int = Field(100, ge=1)
    rollout_batch: int = Field(2048, ge=1)
    coupling_mode: str = Field("qdsb", pattern="^(qdsb|minibatch_ot|independent)$")
    ot_mode: str = Field("entropic", pattern="^(entropic|exact)$")
    cost: str = Field("sqeuclidean", pattern="^(sqeuclidean|euclidean)$")
    sim_mode: str = Field("sde", pattern="^(sde|ode)$")
    hidden: List[int] = Field(default_factory=lambda: [64, 64], min_length=1)
    max_train_seconds: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0)

    @field_validator("hidden", mode="before")
    @classmethod
    def parse_hidden(cls, v):
        if isinstance(v, str):
            return [int(item) for item in v.split(",") if item.strip()]
        return v

    @model_validator(mode="after")
    def resolve_tau(self):
        if self.tau is None:
            self.tau = 2.0 * self.sigma ** 2
        return self


class SimConfig(BaseModel):
    """Euler-Maruyama integration settings"""

    steps: int = Field(100, ge=1)
    sigma: float = Field(0.25, ge=0)
    mode: str = Field("sde", pattern="^(sde|ode)$")
    seed: int = Field(0, ge=0)


class MmdSpec(BaseModel):
    bandwidth: float = Field(..., gt=0)
    reference_size: int = Field(4096, ge=2)


class MetricsRow(BaseModel):
    epoch: int = Field(..., ge=0)
    train_seconds: float = Field(..., ge=0)
    mmd: float
    loss: float


class MetricsLog(BaseModel):
    """Evaluation rows recorded during training"""

    rows: List[MetricsRow] = Field(default_factory=list)
    epoch_losses: List[float] = Field(default_factory=list, description="Mean loss of every epoch")

    @model_validator(mode="after")
    def check_order(self):
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.epoch <= prev.epoch:
                raise ValueError("epochs must be strictly increasing")
            if cur.train_seconds < prev.train_seconds:
                raise ValueError("train_seconds must be non-decreasing")
        return self

    def append(self, row: MetricsRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if row.epoch <= last.epoch or row.train_seconds < last.train_seconds:
                raise ValueError("metrics rows must advance in epoch and time")
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=METRICS_COLUMNS)

    def to_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: Path) -> "MetricsLog":
        frame = pd.read_csv(path)
        return cls(rows=[MetricsRow(**record) for record in frame.to_dict("records")])

    @property
    def final_mmd(self) -> float:
        return self.rows[-1].mmd if self.rows else math.nan

    def mmd_values(self) -> np.ndarray:
        return np.array([row.mmd for row in self.rows], dtype=np.float64)


class RunManifest(BaseModel):
    """Everything needed to reproduce a batch of seeded runs"""

    task: str = Field(..., pattern=TASKS_PATTERN)
    config: TrainConfig = Field(default_factory=TrainConfig)
    seeds: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_SEEDS), min_length=1)
    output_dir: Path = Field(default_factory=lambda: Path(settings.OUTPUT_DIR))
    n_train: int = Field(default_factory=lambda: settings.N_TRAIN, ge=1)
    n_eval: int = Field(default_factory=lambda: settings.N_EVAL, ge=1)
    data_seed: int = Field(0, ge=0)
    source_path: Optional[Path] = None
    target_path: Optional[Path] = None
    eval_source_path: Optional[Path] = None
    eval_target_path: Optional[Path] = None
    workers: int = Field(1, ge=1)

    @field_validator("seeds", mode="before")
    @classmethod
    def parse_seeds(cls, v):
        if isinstance(v, str):
            return [int(item) for item in v.split(",") if item.strip()]
        return v

    @model_validator(mode="after")
    def check_paths(self):
        if self.task == "csv" and (self.source_path is None or self.target_path is None):
            raise ValueError("csv task requires source and target paths")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        return self
