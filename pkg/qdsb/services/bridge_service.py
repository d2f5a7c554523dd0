"""Brownian bridge sampling and the regression targets derived from it.

For endpoints (x0, x1) the bridge marginal at time t is Gaussian with mean
(1 - t) x0 + t x1 and variance sigma^2 t (1 - t).
"""

from typing import Optional, Union

import numpy as np

from qdsb.core.config import settings
from qdsb.core.exceptions import BridgeError, DimensionError, ShapeError
from qdsb.schemas.bridge import BridgeSample

ArrayLike = Union[float, np.ndarray]


def _time(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise BridgeError("bridge time must lie strictly inside (0, 1)")
    return t


def _col(t: np.ndarray) -> np.ndarray:
    return t[..., None]


def bridge_mean(x0: np.ndarray, x1: np.ndarray, t: ArrayLike) -> np.ndarray:
    tc = _col(np.asarray(t, dtype=np.float64))
    return (1.0 - tc) * x0 + tc * x1


def lambda_weight(t: ArrayLike, sigma: float) -> np.ndarray:
    t = _time(t)
    return sigma * np.sqrt(t * (1.0 - t))


def drift_target(x: np.ndarray, x0: np.ndarray, x1: np.ndarray, t: ArrayLike) -> np.ndarray:
    """Conditional drift of the bridge through x at time t."""
    t = _time(t)
    tc = _col(t)
    return ((1.0 - 2.0 * tc) / (tc * (1.0 - tc))) * (x - bridge_mean(x0, x1, t)) + (x1 - x0)


def score_target(x: np.ndarray, x0: np.ndarray, x1: np.ndarray, t: ArrayLike, sigma: float) -> np.ndarray:
    """Gradient of the log bridge marginal density at x."""
    if not sigma > 0:
        raise BridgeError("score target needs sigma > 0")
    t = _time(t)
    tc = _col(t)
    return (bridge_mean(x0, x1, t) - x) / (sigma ** 2 * tc * (1.0 - tc))


def probability_flow_velocity(v: np.ndarray, s: np.ndarray, t: ArrayLike, sigma: float) -> np.ndarray:
    """Velocity whose ODE carries the bridge marginals, from a drift fit to `drift_target` and a score.

    `drift_target` equals the probability-flow velocity minus (sigma^2 / 2)(1 - 2t) times the score,
    so v + (sigma^2 / 2) s with this velocity is the bridge SDE drift (x1 - x) / (1 - t).
    """
    tc = _col(np.asarray(t, dtype=np.float64))
    return v + 0.5 * sigma ** 2 * (1.0 - 2.0 * tc) * s


def sample_bridge_point(
    x0: np.ndarray,
    x1: np.ndarray,
    t: ArrayLike,
    sigma: float,
    seed=None,
) -> np.ndarray:
    if sigma < 0:
        raise BridgeError("sigma must be non-negative")
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise DimensionError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    t = _time(t)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal(np.broadcast_shapes(x0.shape, _col(t).shape))
    return bridge_mean(x0, x1, t) + sigma * _col(np.sqrt(t * (1.0 - t))) * noise


def sample_bridge(
    x0: np.ndarray,
    x1: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
    t: Optional[np.ndarray] = None,
    t_min: Optional[float] = None,
) -> BridgeSample:
    """Draw one bridge point per endpoint pair with its targets.

    Times are uniform on (0, 1) clamped to [t_min, 1 - t_min] unless given.
    """
    if not sigma > 0:
        raise BridgeError("sigma must be positive for training samples")
    if x0.shape != x1.shape or x0.ndim != 2:
        raise DimensionError(f"endpoint batches must share an (m, d) shape, got {x0.shape} and {x1.shape}")
    t_min = settings.T_MIN if t_min is None else t_min
    m = x0.shape[0]
    if t is None:
        t = np.clip(rng.random(m), t_min, 1.0 - t_min)
    t = _time(np.broadcast_to(np.asarray(t, dtype=np.float64), (m,)).copy())

    noise = rng.standard_normal(x0.shape)
    lam = lambda_weight(t, sigma)
    x = bridge_mean(x0, x1, t) + _col(lam) * noise
    return BridgeSample(
        t=t,
        x0=x0,
        x1=x1,
        x=x,
        noise=noise,
        u_target=drift_target(x, x0, x1, t),
        s_target=score_target(x, x0, x1, t, sigma),
        lam=lam,
        sigma=sigma,
    )


def loss_terms(v_pred: np.ndarray, s_pred: np.ndarray, sample: BridgeSample):
    """Per-sample drift, weighted score and total squared errors."""
    for name, pred, target in (("drift", v_pred, sample.u_target), ("score", s_pred, sample.s_target)):
        if np.shape(pred) != np.shape(target):
            raise ShapeError(f"{name} prediction shape {np.shape(pred)} does not match target {np.shape(target)}")
    drift_loss = np.sum((v_pred - sample.u_target) ** 2, axis=-1)
    score_loss = sample.lam ** 2 * np.sum((s_pred - sample.s_target) ** 2, axis=-1)
    return drift_loss, score_loss, drift_loss + score_loss
