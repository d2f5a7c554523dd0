"""Gaussian-kernel MMD with a median-heuristic bandwidth."""

import math
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from qdsb.core.config import settings
from qdsb.core.exceptions import DimensionError, EvaluationError
from qdsb.schemas.training import MmdSpec


def median_bandwidth(reference: np.ndarray, cap: Optional[int] = None) -> float:
    """Lower median of pairwise distances among the first ``cap`` points."""
    cap = settings.MMD_REFERENCE_SIZE if cap is None else cap
    points = np.atleast_2d(np.asarray(reference, dtype=np.float64))[:cap]
    if points.shape[0] < 2:
        raise EvaluationError("median bandwidth needs at least two reference points")
    distances = pdist(points)
    middle = (distances.size - 1) // 2
    h = float(np.partition(distances, middle)[middle])
    if not h > 0:
        raise EvaluationError("median pairwise distance is zero; bandwidth undefined")
    return h


def _canonical(points: np.ndarray) -> np.ndarray:
    # sorted rows make the estimate independent of sample order
    if points.shape[0] < 2:
        return points
    return points[np.lexsort(points.T[::-1])]


def _kernel_mean(a: np.ndarray, b: np.ndarray, h: float, block: int) -> float:
    scale = -1.0 / (2.0 * h * h)
    total = 0.0
    for i in range(0, a.shape[0], block):
        for j in range(0, b.shape[0], block):
            sq = cdist(a[i:i + block], b[j:j + block], metric="sqeuclidean")
            total += float(np.exp(scale * sq).sum())
    return total / (a.shape[0] * b.shape[0])


def mmd(x: np.ndarray, y: np.ndarray, h: float, block: Optional[int] = None) -> float:
    """Biased (V-statistic) MMD with kernel exp(-|a - b|^2 / (2 h^2)).

    Returns the square root of the clamped squared estimate.
    """
    if not h > 0:
        raise EvaluationError(f"bandwidth must be positive, got {h}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise EvaluationError("MMD needs non-empty samples")
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"sample dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    block = settings.MMD_BLOCK_SIZE if block is None else block

    x = _canonical(x)
    y = _canonical(y)
    first, second = (x, y) if (x.shape[0], x.tobytes()) <= (y.shape[0], y.tobytes()) else (y, x)

    kxx = _kernel_mean(x, x, h, block)
    kyy = _kernel_mean(y, y, h, block)
    kxy = _kernel_mean(first, second, h, block)
    return math.sqrt(max(0.0, (kxx + kyy) - 2.0 * kxy))


def mmd_with_spec(x: np.ndarray, y: np.ndarray, spec: MmdSpec) -> float:
    return mmd(x, y, spec.bandwidth)


def make_mmd_spec(reference: np.ndarray, cap: Optional[int] = None) -> MmdSpec:
    cap = settings.MMD_REFERENCE_SIZE if cap is None else cap
    return MmdSpec(bandwidth=median_bandwidth(reference, cap), reference_size=max(cap, 2))
