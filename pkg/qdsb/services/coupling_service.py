"""Pair samplers: anchor-lifted plans, minibatch OT and independent pairs."""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from qdsb.core.config import settings
from qdsb.core.exceptions import ConfigurationError, DimensionError, MarginalError
from qdsb.core.logging import get_logger
from qdsb.schemas.quantization import AnchorQuantization
from qdsb.schemas.transport import TransportPlan
from qdsb.services.transport_service import cost_matrix, exact_assignment_ot, sinkhorn

logger = get_logger(__name__)


class CouplingSampler(BaseModel):
    """Anchor plan lifted to the samples: draw (alpha, beta) from the plan,
    then a uniform member of each cell."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    quant0: AnchorQuantization
    quant1: AnchorQuantization
    plan: TransportPlan
    cdf: np.ndarray
    order0: np.ndarray
    start0: np.ndarray
    order1: np.ndarray
    start1: np.ndarray


def _cell_layout(quant: AnchorQuantization) -> Tuple[np.ndarray, np.ndarray]:
    counts = quant.counts
    order = np.concatenate(quant.cells) if quant.k else np.zeros(0, dtype=np.int64)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    return order.astype(np.int64), start


def build_anchor_coupling(
    quant0: AnchorQuantization,
    quant1: AnchorQuantization,
    plan: TransportPlan,
    atol: Optional[float] = None,
) -> CouplingSampler:
    atol = settings.COUPLING_ATOL if atol is None else atol
    if plan.plan.shape != (quant0.k, quant1.k):
        raise DimensionError(f"plan {plan.plan.shape} does not match anchors ({quant0.k}, {quant1.k})")
    if quant0.cloud.d != quant1.cloud.d:
        raise DimensionError("source and target dimensions differ")
    row_err = np.abs(plan.plan.sum(axis=1) - quant0.masses).sum()
    col_err = np.abs(plan.plan.sum(axis=0) - quant1.masses).sum()
    if row_err > atol or col_err > atol:
        raise MarginalError(f"plan marginals differ from cell masses (rows {row_err:.3g}, cols {col_err:.3g})")

    cdf = np.cumsum(plan.plan.ravel())
    cdf = cdf / cdf[-1]
    cdf[-1] = 1.0
    order0, start0 = _cell_layout(quant0)
    order1, start1 = _cell_layout(quant1)
    return CouplingSampler(
        quant0=quant0,
        quant1=quant1,
        plan=plan,
        cdf=cdf,
        order0=order0,
        start0=start0,
        order1=order1,
        start1=start1,
    )


def sample_pair_indices(
    sampler: CouplingSampler, m: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample indices of m source/target pairs."""
    k1 = sampler.quant1.k
    flat = np.searchsorted(sampler.cdf, rng.random(m), side="right")
    flat = np.minimum(flat, sampler.cdf.size - 1)
    alpha, beta = np.divmod(flat, k1)

    counts0 = sampler.quant0.counts
    counts1 = sampler.quant1.counts
    offset0 = np.floor(rng.random(m) * counts0[alpha]).astype(np.int64)
    offset1 = np.floor(rng.random(m) * counts1[beta]).astype(np.int64)
    src = sampler.order0[sampler.start0[alpha] + np.minimum(offset0, counts0[alpha] - 1)]
    tgt = sampler.order1[sampler.start1[beta] + np.minimum(offset1, counts1[beta] - 1)]
    return src, tgt


def sample_pairs(
    sampler: CouplingSampler, m: int, seed=None
) -> Tuple[np.ndarray, np.ndarray]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    src, tgt = sample_pair_indices(sampler, m, rng)
    return sampler.quant0.cloud.points[src], sampler.quant1.cloud.points[tgt]


def source_marginal(sampler: CouplingSampler) -> np.ndarray:
    """Exact probability of drawing each source sample."""
    quant = sampler.quant0
    row = sampler.plan.plan.sum(axis=1)
    return row[quant.assignment] / quant.counts[quant.assignment]


def target_marginal(sampler: CouplingSampler) -> np.ndarray:
    quant = sampler.quant1
    col = sampler.plan.plan.sum(axis=0)
    return col[quant.assignment] / quant.counts[quant.assignment]


def pair_probabilities(sampler: CouplingSampler) -> np.ndarray:
    """n0 x n1 matrix of exact pair probabilities of the lifted coupling."""
    q0, q1 = sampler.quant0, sampler.quant1
    lifted = sampler.plan.plan[np.ix_(q0.assignment, q1.assignment)]
    return lifted / np.outer(q0.counts[q0.assignment], q1.counts[q1.assignment])


def minibatch_ot_pairs(
    batch0: np.ndarray,
    batch1: np.ndarray,
    mode: str = "exact",
    tau: Optional[float] = None,
    seed=None,
    kind: str = "sqeuclidean",
) -> Tuple[np.ndarray, np.ndarray]:
    """Re-pair two equal-size minibatches by exact or entropic OT."""
    if batch0.shape[0] != batch1.shape[0]:
        raise DimensionError(f"minibatch sizes differ: {batch0.shape[0]} vs {batch1.shape[0]}")
    if mode == "exact":
        plan = exact_assignment_ot(batch0, batch1, kind)
        return batch0, batch1[plan.matching]
    if mode == "entropic":
        if tau is None:
            raise ConfigurationError("entropic minibatch OT requires tau")
        size = batch0.shape[0]
        uniform = np.full(size, 1.0 / size)
        plan = sinkhorn(cost_matrix(batch0, batch1, kind), uniform, uniform, tau)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        cdf = np.cumsum(plan.plan.ravel())
        cdf /= cdf[-1]
        flat = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), cdf.size - 1)
        rows, cols = np.divmod(flat, size)
        return batch0[rows], batch1[cols]
    raise ConfigurationError(f"unknown minibatch OT mode {mode!r}")


def independent_pairs(
    batch0: np.ndarray, batch1: np.ndarray, seed=None, size: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    if batch0.shape[0] == 0 or batch1.shape[0] == 0:
        raise DimensionError("independent coupling needs non-empty batches")
    if batch0.ndim != 2 or batch1.ndim != 2 or batch0.shape[1] != batch1.shape[1]:
        raise DimensionError(f"batch shapes differ: {batch0.shape} vs {batch1.shape}")
    size = batch0.shape[0] if size is None else size
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return batch0[rng.integers(batch0.shape[0], size=size)], batch1[rng.integers(batch1.shape[0], size=size)]
