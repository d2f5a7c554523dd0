"""Cost matrices, log-domain Sinkhorn and exact transport solvers."""

from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from qdsb.core.config import settings
from qdsb.core.exceptions import DimensionError, MarginalError, TransportError
from qdsb.core.logging import get_logger
from qdsb.schemas.data import PointCloud
from qdsb.schemas.quantization import AnchorQuantization
from qdsb.schemas.transport import TransportPlan

logger = get_logger(__name__)

PLAN_DUMP_THRESHOLD = 1e-15

COST_KINDS = {"sqeuclidean": "sqeuclidean", "euclidean": "euclidean"}


def cost_matrix(a0: np.ndarray, a1: np.ndarray, kind: str = "sqeuclidean") -> np.ndarray:
    a0 = np.atleast_2d(np.asarray(a0, dtype=np.float64))
    a1 = np.atleast_2d(np.asarray(a1, dtype=np.float64))
    if a0.shape[1] != a1.shape[1]:
        raise DimensionError(f"point dimensions differ: {a0.shape[1]} vs {a1.shape[1]}")
    if kind not in COST_KINDS:
        raise TransportError(f"unknown cost {kind!r}")
    return cdist(a0, a1, metric=COST_KINDS[kind])


def _check_problem(cost: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    nu = np.asarray(nu, dtype=np.float64).reshape(-1)
    if cost.shape != (mu.size, nu.size):
        raise DimensionError(f"cost {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    if mu.size == 0 or nu.size == 0:
        raise MarginalError("marginals must be non-empty")
    for name, marginal in (("mu", mu), ("nu", nu)):
        if np.any(marginal <= 0):
            raise MarginalError(f"{name} must be strictly positive")
        if abs(marginal.sum() - 1.0) > settings.MARGINAL_ATOL:
            raise MarginalError(f"{name} sums to {marginal.sum()!r}, expected 1")
    return mu, nu


def marginal_violation(plan: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    """L1 distance of the plan's marginals to (mu, nu)."""
    return float(np.abs(plan.sum(axis=1) - mu).sum() + np.abs(plan.sum(axis=0) - nu).sum())


def round_to_marginals(plan: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Project an approximate plan onto the exact transport polytope.

    Rows are scaled down to fit mu, then columns to fit nu, and the leftover
    mass is redistributed as a rank-one correction.
    """
    row_sums = plan.sum(axis=1)
    x = np.minimum(np.divide(mu, row_sums, out=np.ones_like(mu), where=row_sums > 0), 1.0)
    plan = plan * x[:, None]
    col_sums = plan.sum(axis=0)
    y = np.minimum(np.divide(nu, col_sums, out=np.ones_like(nu), where=col_sums > 0), 1.0)
    plan = plan * y[None, :]
    err_r = mu - plan.sum(axis=1)
    err_c = nu - plan.sum(axis=0)
    total = err_r.sum()
    if total > 0:
        plan = plan + np.outer(err_r, err_c) / total
    return plan


def kl_to_product(plan: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    mask = plan > 0
    ref = np.outer(mu, nu)
    return float(np.sum(plan[mask] * (np.log(plan[mask]) - np.log(ref[mask]))))


def _finish(
    plan: np.ndarray,
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    tau: float,
    converged: bool,
    n_iter: int,
    matching: Optional[np.ndarray] = None,
) -> TransportPlan:
    cost_value = float(np.sum(plan * cost))
    kl = kl_to_product(plan, mu, nu)
    return TransportPlan(
        plan=plan,
        mu=mu,
        nu=nu,
        tau=tau,
        cost_value=cost_value,
        entropic_value=cost_value + tau * kl if tau > 0 else cost_value,
        kl=kl,
        converged=converged,
        n_iter=n_iter,
        marginal_error=marginal_violation(plan, mu, nu),
        matching=matching,
    )


def sinkhorn(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    tau: float,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> TransportPlan:
    """Entropic OT in the log domain.

    Dual potentials start at zero and alternate logsumexp updates until the
    L1 marginal violation drops below ``tol``. The result is always rounded
    onto the exact marginals; ``converged`` reports whether ``tol`` was met.
    """
    if not tau > 0:
        raise TransportError(f"entropic regularization must be positive, got {tau}")
    tol = settings.SINKHORN_TOL if tol is None else tol
    max_iter = settings.SINKHORN_MAX_ITER if max_iter is None else max_iter
    cost = np.asarray(cost, dtype=np.float64)
    mu, nu = _check_problem(cost, mu, nu)

    log_mu = np.log(mu)
    log_nu = np.log(nu)
    kernel = -cost / tau
    f = np.zeros(mu.size)
    g = np.zeros(nu.size)

    converged = False
    n_iter = 0
    err = np.inf
    for n_iter in range(1, max_iter + 1):
        g = log_nu - logsumexp(kernel + f[:, None], axis=0)
        f = log_mu - logsumexp(kernel + g[None, :], axis=1)
        plan = np.exp(kernel + f[:, None] + g[None, :])
        err = marginal_violation(plan, mu, nu)
        if err < tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "Sinkhorn did not reach tolerance",
            n_iter=n_iter,
            violation=err,
            tol=tol,
            tau=tau,
        )

    plan = round_to_marginals(np.exp(kernel + f[:, None] + g[None, :]), mu, nu)
    return _finish(plan, cost, mu, nu, tau, converged, n_iter)


def exact_ot(cost: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> TransportPlan:
    """Unregularized OT between weighted measures via the HiGHS LP solver."""
    cost = np.asarray(cost, dtype=np.float64)
    mu, nu = _check_problem(cost, mu, nu)
    k0, k1 = cost.shape

    rows = sparse.kron(sparse.eye(k0), np.ones((1, k1)))
    cols = sparse.kron(np.ones((1, k0)), sparse.eye(k1))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([mu, nu])

    result = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if result.status != 0:
        raise TransportError(f"LP solver failed: {result.message}")

    plan = np.clip(result.x.reshape(k0, k1), 0.0, None)
    plan = round_to_marginals(plan, mu, nu)
    return _finish(plan, cost, mu, nu, 0.0, True, int(getattr(result, "nit", 0) or 0))


def exact_assignment_ot(x: np.ndarray, y: np.ndarray, kind: str = "sqeuclidean") -> TransportPlan:
    """Optimal permutation between two equal-size uniform samples."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] != y.shape[0]:
        raise TransportError(f"sample sizes differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n == 0:
        raise TransportError("cannot match empty samples")
    cost = cost_matrix(x, y, kind)
    row_ind, col_ind = linear_sum_assignment(cost)
    plan = np.zeros((n, n))
    plan[row_ind, col_ind] = 1.0 / n
    uniform = np.full(n, 1.0 / n)
    return _finish(plan, cost, uniform, uniform, 0.0, True, 0, matching=col_ind)


def dump_plan_tsv(plan: TransportPlan, path: Union[str, Path]) -> None:
    """Plan entries above 1e-15 as ``row<TAB>col<TAB>mass``."""
    rows, cols = np.nonzero(plan.plan > PLAN_DUMP_THRESHOLD)
    lines = ["row\tcol\tmass"]
    lines.extend(f"{i}\t{j}\t{float(plan.plan[i, j])!r}" for i, j in zip(rows, cols))
    Path(path).write_text("\n".join(lines) + "\n")


def wasserstein_via_expansion(cloud: PointCloud, quant: AnchorQuantization, a: float = 2.0) -> float:
    """Exact W_a between a uniform cloud and its anchor quantization.

    The quantized measure is expanded into n unit atoms (each anchor repeated
    once per cell member) so both sides are uniform n-point sets.
    """
    if not 1 <= a < np.inf:
        raise TransportError(f"exponent must be finite and >= 1, got {a}")
    points = cloud.points
    n = cloud.n
    if n != quant.n:
        raise DimensionError(f"cloud has {n} points but quantization covers {quant.n}")
    units = quant.masses * n
    if not np.allclose(units, np.rint(units), rtol=0.0, atol=1e-9):
        raise TransportError("anchor masses are not multiples of 1/n")

    expanded = np.repeat(quant.anchors, np.rint(units).astype(np.int64), axis=0)
    cost = cdist(points, expanded) ** a
    row_ind, col_ind = linear_sum_assignment(cost)
    return float(cost[row_ind, col_ind].sum() / n) ** (1.0 / a)
