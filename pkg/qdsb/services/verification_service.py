"""Randomized small-scale checks of the quantization stability bounds."""

import itertools
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from qdsb.core.config import settings
from qdsb.core.exceptions import OracleSizeError
from qdsb.core.logging import get_logger
from qdsb.core.seeding import derive_seed, make_rng
from qdsb.schemas.data import PointCloud
from qdsb.schemas.verification import StabilityRecord, StabilityReport
from qdsb.services.anchor_service import assign_cells, farthest_first, quantize
from qdsb.services.coupling_service import build_anchor_coupling, pair_probabilities
from qdsb.services.dataset_service import gen_eight_gaussians, gen_moons
from qdsb.services.transport_service import (
    cost_matrix,
    exact_ot,
    sinkhorn,
    wasserstein_via_expansion,
)

logger = get_logger(__name__)

ENDPOINT_TOL = 1e-10
RADIUS_TOL = 1e-12
KCENTER_TOL = 1e-12
COMPOSITION_TOL = 1e-12
VALUE_IDENTITY_TOL = 1e-8
PLAN_SUPPORT_TOL = 1e-12
COUPLING_MONOTONE_TOL = 0.05
ABS_MONOTONE_TOL = 1e-9


def _delta(eps0: float, eps1: float, a: float) -> float:
    return (eps0 ** a + eps1 ** a) ** (1.0 / a)


def _require(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise OracleSizeError(f"{what} oracle limited to n <= {limit}, got n={n}")


def check_endpoint_bound(
    cloud: PointCloud,
    k: int,
    a: float = 2.0,
    seed: int = 0,
    init_index: Optional[int] = None,
    inject_fault: bool = False,
    instance: int = 0,
) -> StabilityRecord:
    """Exact W_a(q, q~) against the quantization error and coverage radius."""
    _require(cloud.n, settings.EXACT_ORACLE_MAX_N, "endpoint")
    quant = quantize(cloud, k, seed=seed, init_index=init_index, exponent=a)
    epsilon = quant.quant_error
    if inject_fault:
        epsilon = 0.5 * epsilon - 1.0
    w = wasserstein_via_expansion(cloud, quant, a)
    return StabilityRecord(
        check="endpoint",
        instance=instance,
        seed=seed,
        n=cloud.n,
        k=k,
        a=a,
        epsilon0=epsilon,
        r0=quant.coverage_radius,
        W0=w,
        flags={
            "endpoint_bound": w <= epsilon + ENDPOINT_TOL,
            "radius_bound": epsilon <= quant.coverage_radius + RADIUS_TOL,
        },
    )


def check_endpoint_pair(
    cloud0: PointCloud,
    cloud1: PointCloud,
    k: int,
    a: float = 2.0,
    seed: int = 0,
    inject_fault: bool = False,
    instance: int = 0,
) -> StabilityRecord:
    """Both endpoints of one instance, plus the radius bound on delta_a."""
    side0 = check_endpoint_bound(cloud0, k, a, derive_seed(seed, 0), inject_fault=inject_fault)
    side1 = check_endpoint_bound(cloud1, k, a, derive_seed(seed, 1))
    eps0, eps1 = side0.epsilon0, side1.epsilon0
    delta = _delta(max(eps0, 0.0), max(eps1, 0.0), a)
    flags = {f"{name}0": ok for name, ok in side0.flags.items()}
    flags.update({f"{name}1": ok for name, ok in side1.flags.items()})
    flags["delta_radius_bound"] = delta <= _delta(side0.r0, side1.r0, a) + RADIUS_TOL
    flags["delta_composition"] = (
        eps0 >= 0 and eps1 >= 0 and abs(_delta(eps0, eps1, a) - delta) <= COMPOSITION_TOL
    )
    return StabilityRecord(
        check="endpoint",
        instance=instance,
        seed=seed,
        n=cloud0.n,
        k=k,
        a=a,
        epsilon0=eps0,
        epsilon1=eps1,
        delta_a=delta,
        r0=side0.r0,
        r1=side1.r0,
        W0=side0.W0,
        W1=side1.W0,
        flags=flags,
    )


def _entropic_value(points0: np.ndarray, w0: np.ndarray, points1: np.ndarray, w1: np.ndarray, tau: float) -> float:
    return sinkhorn(cost_matrix(points0, points1), w0, w1, tau).entropic_value


def check_value_convergence(
    cloud0: PointCloud,
    cloud1: PointCloud,
    k_grid: Sequence[int],
    tau: float,
    seed: int = 0,
    a: float = 2.0,
) -> List[StabilityRecord]:
    """Entropic value gap between full and quantized problems along a nested k grid."""
    n = max(cloud0.n, cloud1.n)
    _require(n, settings.VALUE_ORACLE_MAX_N, "value")
    k_grid = sorted(set(int(k) for k in k_grid))
    k_max = k_grid[-1]

    full = _entropic_value(cloud0.points, cloud0.weights, cloud1.points, cloud1.weights, tau)
    # one traversal per side; prefixes give the nested grid
    order0 = farthest_first(cloud0, k_max, seed=derive_seed(seed, 0))
    order1 = farthest_first(cloud1, k_max, seed=derive_seed(seed, 1))

    records: List[StabilityRecord] = []
    for k in k_grid:
        q0 = assign_cells(cloud0, order0[:k], exponent=a)
        q1 = assign_cells(cloud1, order1[:k], exponent=a)
        value = _entropic_value(q0.anchors, q0.masses, q1.anchors, q1.masses, tau)
        gap = abs(full - value)
        records.append(
            StabilityRecord(
                check="value",
                instance=len(records),
                seed=seed,
                n=n,
                k=k,
                a=a,
                tau=tau,
                epsilon0=q0.quant_error,
                epsilon1=q1.quant_error,
                delta_a=_delta(q0.quant_error, q1.quant_error, a),
                r0=q0.coverage_radius,
                r1=q1.coverage_radius,
                value_full=full,
                value_quant=value,
                value_gap=gap,
                flags={"value_identity": gap <= VALUE_IDENTITY_TOL} if k == n else {},
            )
        )

    for prev, cur in zip(records, records[1:]):
        cur.flags["delta_nonincreasing"] = cur.delta_a <= prev.delta_a + RADIUS_TOL
    if len(records) > 1:
        records[-1].flags["gap_shrinks"] = records[-1].value_gap < records[0].value_gap
    return records


def _radius(points: np.ndarray, subset: Sequence[int]) -> float:
    return float(cdist(points, points[list(subset)]).min(axis=1).max())


def check_kcenter_approx(
    cloud: PointCloud,
    k: int,
    init_index: Optional[int] = None,
    instance: int = 0,
) -> StabilityRecord:
    """Greedy radius over brute-force optimal radius, worst case over all inits."""
    _require(cloud.n, settings.KCENTER_ORACLE_MAX_N, "k-center")
    if k > 4:
        raise OracleSizeError(f"k-center oracle limited to k <= 4, got k={k}")
    points = cloud.points
    optimal = min(_radius(points, subset) for subset in itertools.combinations(range(cloud.n), k))

    inits = range(cloud.n) if init_index is None else [init_index]
    greedy = max(_radius(points, farthest_first(cloud, k, init_index=i)) for i in inits)
    ratio = 1.0 if optimal == 0.0 else greedy / optimal
    return StabilityRecord(
        check="kcenter",
        instance=instance,
        n=cloud.n,
        k=k,
        greedy_radius=greedy,
        optimal_radius=optimal,
        ratio=ratio,
        flags={"two_approximation": ratio <= 2.0 + KCENTER_TOL},
    )


def _support(plan: np.ndarray, pairs: np.ndarray):
    mass = plan.ravel() / plan.sum()
    keep = mass > PLAN_SUPPORT_TOL
    return pairs[keep], mass[keep] / mass[keep].sum()


def plan_distance(lifted: np.ndarray, full: np.ndarray, points0: np.ndarray, points1: np.ndarray) -> float:
    """Exact W_1 between two plans viewed as measures on the product space.

    Entries below PLAN_SUPPORT_TOL are dropped and the rest renormalized
    before the LP.
    """
    pairs = np.concatenate(
        [np.repeat(points0, points1.shape[0], axis=0), np.tile(points1, (points0.shape[0], 1))],
        axis=1,
    )
    support_p, mass_p = _support(lifted, pairs)
    support_q, mass_q = _support(full, pairs)
    return exact_ot(cdist(support_p, support_q), mass_p, mass_q).cost_value


def non_increasing(values: Sequence[float], rel_tol: float = COUPLING_MONOTONE_TOL) -> bool:
    """Whether each value is at most its predecessor, up to a relative slack."""
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(values[1:] <= values[:-1] * (1.0 + rel_tol) + ABS_MONOTONE_TOL))


def check_coupling_stability(
    cloud0: PointCloud,
    cloud1: PointCloud,
    k_grid: Sequence[int],
    tau: float,
    seeds: Sequence[int],
    monotone_tol: float = COUPLING_MONOTONE_TOL,
) -> List[StabilityRecord]:
    """Seed-averaged plan distance between the lifted anchor plan and the full plan."""
    n = max(cloud0.n, cloud1.n)
    _require(n, settings.PLAN_ORACLE_MAX_N, "plan")
    k_grid = sorted(set(int(k) for k in k_grid))
    full = sinkhorn(cost_matrix(cloud0.points, cloud1.points), cloud0.weights, cloud1.weights, tau)

    totals = np.zeros(len(k_grid))
    for seed in seeds:
        order0 = farthest_first(cloud0, k_grid[-1], seed=derive_seed(seed, 0))
        order1 = farthest_first(cloud1, k_grid[-1], seed=derive_seed(seed, 1))
        for slot, k in enumerate(k_grid):
            q0 = assign_cells(cloud0, order0[:k])
            q1 = assign_cells(cloud1, order1[:k])
            plan = sinkhorn(cost_matrix(q0.anchors, q1.anchors), q0.masses, q1.masses, tau)
            lifted = pair_probabilities(build_anchor_coupling(q0, q1, plan))
            totals[slot] += plan_distance(lifted, full.plan, cloud0.points, cloud1.points)

    averages = totals / len(seeds)
    records = [
        StabilityRecord(check="coupling", instance=i, n=n, k=k, tau=tau, plan_distance=float(avg))
        for i, (k, avg) in enumerate(zip(k_grid, averages))
    ]
    if len(records) > 1:
        records[-1].flags["plan_distance_shrinks"] = averages[-1] < averages[0]
        records[-1].flags["plan_distance_non_increasing"] = non_increasing(averages, monotone_tol)
    if k_grid[-1] == n:
        records[-1].flags["plan_distance_vanishes"] = averages[-1] <= 1e-6
    logger.info("Coupling stability proxy", k_grid=k_grid, distances=np.round(averages, 6).tolist())
    return records


def _random_cloud(rng: np.random.Generator, n: int, d: int = 2) -> PointCloud:
    return PointCloud(points=rng.standard_normal((n, d)))


def run_suite(
    endpoint_instances: int = 200,
    endpoint_n: int = 32,
    endpoint_k: Sequence[int] = (2, 4, 8),
    kcenter_instances: int = 100,
    kcenter_n: int = 10,
    kcenter_k: int = 3,
    value_n: int = 256,
    value_grid: Sequence[int] = (1, 4, 16, 64),
    coupling_n: int = 10,
    coupling_grid: Sequence[int] = (1, 2, 5, 10),
    coupling_seeds: int = 20,
    tau: float = 0.125,
    seed: int = 0,
    inject_fault: bool = False,
) -> StabilityReport:
    """Run every check family; zero instance counts skip a family."""
    report = StabilityReport()
    rng = make_rng(seed, 0)

    for i in range(endpoint_instances):
        k = int(endpoint_k[i % len(endpoint_k)])
        cloud0 = _random_cloud(rng, endpoint_n)
        cloud1 = _random_cloud(rng, endpoint_n)
        report.records.append(
            check_endpoint_pair(cloud0, cloud1, k, 2.0, derive_seed(seed, 1, i), inject_fault=inject_fault, instance=i)
        )

    for i in range(kcenter_instances):
        report.records.append(check_kcenter_approx(_random_cloud(rng, kcenter_n), kcenter_k, instance=i))

    value_grid = [k for k in value_grid if k <= value_n]
    coupling_grid = [k for k in coupling_grid if k <= coupling_n]

    if value_n > 0 and value_grid:
        cloud0 = gen_eight_gaussians(value_n, derive_seed(seed, 2, 0))
        cloud1 = gen_moons(value_n, derive_seed(seed, 2, 1))
        value_records = check_value_convergence(cloud0, cloud1, value_grid, tau, derive_seed(seed, 2, 2))
        report.records.extend(value_records)

    if coupling_n > 0 and coupling_grid and coupling_seeds > 0:
        cloud0 = _random_cloud(rng, coupling_n)
        cloud1 = PointCloud(points=_random_cloud(rng, coupling_n).points + 2.0)
        seeds = [derive_seed(seed, 3, s) for s in range(coupling_seeds)]
        report.records.extend(check_coupling_stability(cloud0, cloud1, coupling_grid, tau, seeds))

    for record in report.records:
        if not record.passed:
            logger.error("Bound violated", check=record.check, instance=record.instance, violations=record.violations)
    logger.info("Verification finished", records=len(report.records), passed=report.passed)
    return report
