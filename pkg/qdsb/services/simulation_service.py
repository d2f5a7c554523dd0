"""Euler-Maruyama integration of the learned bridge from t = 0 to t = 1."""

import math
from typing import Optional, Protocol

import numpy as np

from qdsb.core.exceptions import DimensionError, SimulationError
from qdsb.core.logging import get_logger
from qdsb.core.seeding import derive_seed
from qdsb.schemas.training import SimConfig

logger = get_logger(__name__)


class VectorField(Protocol):
    def drift(self, t: float, x: np.ndarray) -> np.ndarray: ...

    def score(self, t: float, x: np.ndarray) -> np.ndarray: ...


def simulate(field: VectorField, x0: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Push a batch through the SDE dX = [v + (sigma^2/2) s] dt + sigma dB,
    or through the drift-only ODE when ``cfg.mode == "ode"``."""
    x = np.array(x0, dtype=np.float64, copy=True)
    if x.ndim != 2:
        raise DimensionError(f"initial states must be (batch, d), got {x.shape}")
    if x.shape[0] == 0:
        return x

    dt = 1.0 / cfg.steps
    root_dt = math.sqrt(dt)
    stochastic = cfg.mode == "sde"
    rng = np.random.default_rng(cfg.seed)
    half_var = 0.5 * cfg.sigma ** 2

    for step in range(cfg.steps):
        t = step * dt
        velocity = field.drift(t, x)
        if stochastic:
            if half_var:
                velocity = velocity + half_var * field.score(t, x)
            x = x + velocity * dt + cfg.sigma * root_dt * rng.standard_normal(x.shape)
        else:
            x = x + velocity * dt
        if not np.all(np.isfinite(x)):
            logger.error("Simulation diverged", step=step, t=t, mode=cfg.mode)
            raise SimulationError(f"non-finite state at step {step} (t={t:.4f})", step=step)
    return x


def simulate_chunked(
    field: VectorField,
    x0: np.ndarray,
    cfg: SimConfig,
    chunk: Optional[int] = None,
) -> np.ndarray:
    """Simulate in fixed-size chunks, each on its own derived noise stream."""
    chunk = x0.shape[0] if not chunk else chunk
    outputs = []
    for index, start in enumerate(range(0, x0.shape[0], chunk)):
        chunk_cfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, index)})
        outputs.append(simulate(field, x0[start:start + chunk], chunk_cfg))
    if not outputs:
        return np.array(x0, dtype=np.float64, copy=True)
    return np.concatenate(outputs, axis=0)
