"""Farthest-first anchor selection and nearest-anchor quantization."""

import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from qdsb.core.config import settings
from qdsb.core.exceptions import AnchorError, ConfigurationError
from qdsb.core.logging import get_logger
from qdsb.schemas.data import PointCloud
from qdsb.schemas.quantization import AnchorQuantization

logger = get_logger(__name__)

_ASSIGN_CHUNK = 4096


def farthest_first(
    cloud: PointCloud,
    k: int,
    seed: Optional[int] = None,
    init_index: Optional[int] = None,
) -> np.ndarray:
    """Greedy k-center traversal.

    The first anchor is ``init_index`` when given, otherwise a uniform draw
    from ``seed``. Each later anchor maximises the distance to the anchors
    chosen so far; ties go to the lowest sample index.
    """
    n = cloud.n
    if not 1 <= k <= n:
        raise AnchorError(f"anchor count must satisfy 1 <= k <= n, got k={k}, n={n}")

    if init_index is None:
        init_index = int(np.random.default_rng(seed).integers(n))
    elif not 0 <= init_index < n:
        raise AnchorError(f"init index {init_index} outside [0, {n})")

    points = cloud.points
    selected = np.empty(k, dtype=np.int64)
    selected[0] = init_index
    min_dist = np.linalg.norm(points - points[init_index], axis=1)
    min_dist[init_index] = -np.inf

    for slot in range(1, k):
        # argmax returns the first maximum
        nxt = int(np.argmax(min_dist))
        selected[slot] = nxt
        np.minimum(min_dist, np.linalg.norm(points - points[nxt], axis=1), out=min_dist)
        min_dist[nxt] = -np.inf

    return selected


def quantization_error(distances: np.ndarray, a: float) -> float:
    """Power mean of nearest-anchor distances; the maximum for a = inf."""
    if distances.size == 0:
        raise AnchorError("quantization error of an empty cloud is undefined")
    if math.isinf(a):
        return float(distances.max())
    if a < 1:
        raise ConfigurationError(f"quantization exponent must be >= 1, got {a}")
    return float(np.mean(distances ** a) ** (1.0 / a))


def _nearest_anchor(points: np.ndarray, anchors: np.ndarray):
    assignment = np.empty(points.shape[0], dtype=np.int64)
    distances = np.empty(points.shape[0], dtype=np.float64)
    for start in range(0, points.shape[0], _ASSIGN_CHUNK):
        block = cdist(points[start:start + _ASSIGN_CHUNK], anchors)
        idx = np.argmin(block, axis=1)
        assignment[start:start + _ASSIGN_CHUNK] = idx
        distances[start:start + _ASSIGN_CHUNK] = block[np.arange(len(idx)), idx]
    return assignment, distances


def assign_cells(
    cloud: PointCloud,
    anchor_indices,
    exponent: Optional[float] = None,
) -> AnchorQuantization:
    """Assign every sample to its nearest anchor (lowest slot on ties)."""
    exponent = settings.QUANT_EXPONENT if exponent is None else float(exponent)
    anchor_indices = np.asarray(anchor_indices, dtype=np.int64).reshape(-1)
    k = anchor_indices.size
    if k == 0:
        raise AnchorError("at least one anchor is required")
    if len(np.unique(anchor_indices)) != k:
        raise AnchorError("anchor indices must be distinct")
    if anchor_indices.min() < 0 or anchor_indices.max() >= cloud.n:
        raise AnchorError(f"anchor indices must lie in [0, {cloud.n})")

    anchors = cloud.points[anchor_indices]
    assignment, distances = _nearest_anchor(cloud.points, anchors)
    # an anchor always owns itself, even when a duplicate point sits in a lower slot
    assignment[anchor_indices] = np.arange(k)
    distances[anchor_indices] = 0.0

    counts = np.bincount(assignment, minlength=k)
    order = np.argsort(assignment, kind="stable")
    cells = np.split(order, np.cumsum(counts)[:-1])

    return AnchorQuantization(
        cloud=cloud,
        anchor_indices=anchor_indices,
        anchors=anchors,
        assignment=assignment,
        distances=distances,
        cells=cells,
        masses=counts / cloud.n,
        coverage_radius=float(distances.max()),
        quant_error=quantization_error(distances, exponent),
        exponent=exponent,
    )


def coverage_radius_of(cloud: PointCloud, anchor_indices) -> float:
    anchor_indices = np.asarray(anchor_indices, dtype=np.int64).reshape(-1)
    if anchor_indices.size == 0:
        raise AnchorError("coverage radius of an empty anchor set is undefined")
    _, distances = _nearest_anchor(cloud.points, cloud.points[anchor_indices])
    return float(distances.max())


def quantize(
    cloud: PointCloud,
    k: int,
    seed: Optional[int] = None,
    init_index: Optional[int] = None,
    exponent: Optional[float] = None,
) -> AnchorQuantization:
    anchor_indices = farthest_first(cloud, k, seed=seed, init_index=init_index)
    quant = assign_cells(cloud, anchor_indices, exponent=exponent)
    logger.debug(
        "Quantized cloud",
        n=cloud.n,
        k=k,
        coverage_radius=quant.coverage_radius,
        quant_error=quant.quant_error,
    )
    return quant


def dump_assignment_tsv(quant: AnchorQuantization, path: Union[str, Path]) -> None:
    """One `sample_index<TAB>anchor_slot` line per sample."""
    lines = [f"{i}\t{int(slot)}" for i, slot in enumerate(quant.assignment)]
    Path(path).write_text("\n".join(lines) + "\n")
