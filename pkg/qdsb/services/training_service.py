"""Bridge training with quantized anchor couplings."""

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

from qdsb.core.exceptions import ConfigurationError, DimensionError, TrainingError
from qdsb.core.logging import get_logger
from qdsb.core.seeding import derive_seed, make_rng
from qdsb.schemas.data import PointCloud
from qdsb.schemas.model import AdamHyper, ModelBundle
from qdsb.schemas.quantization import AnchorQuantization
from qdsb.schemas.training import MetricsLog, MetricsRow, SimConfig, TrainConfig
from qdsb.schemas.transport import TransportPlan
from qdsb.services.anchor_service import assign_cells, farthest_first
from qdsb.services.bridge_service import loss_terms, sample_bridge
from qdsb.services.coupling_service import (
    CouplingSampler,
    build_anchor_coupling,
    independent_pairs,
    minibatch_ot_pairs,
    sample_pair_indices,
)
from qdsb.services.evaluation_service import median_bandwidth, mmd
from qdsb.services.model_service import (
    ModelField,
    adamw_step,
    init_bundle,
    mlp_backward,
    mlp_forward_with_cache,
)
from qdsb.services.simulation_service import simulate_chunked
from qdsb.services.transport_service import cost_matrix, exact_ot, sinkhorn

logger = get_logger(__name__)

# sub-stream ids under the run seed
_INIT_STREAM = 0
_ANCHOR_STREAM = 1
_PAIR_STREAM = 2
_EVAL_STREAM = 3

Evaluator = Callable[[ModelBundle, int], float]


class TrainClock:
    """Wall clock that can be paused while evaluation runs"""

    def __init__(self, timer: Callable[[], float] = time.perf_counter):
        self._timer = timer
        self._accumulated = 0.0
        self._started_at: Optional[float] = None

    @property
    def running(self) -> bool:
        return self._started_at is not None

    def start(self) -> None:
        if self._started_at is None:
            self._started_at = self._timer()

    def stop(self) -> None:
        if self._started_at is not None:
            self._accumulated += self._timer() - self._started_at
            self._started_at = None

    @property
    def elapsed(self) -> float:
        if self._started_at is None:
            return self._accumulated
        return self._accumulated + self._timer() - self._started_at

    @contextmanager
    def paused(self) -> Iterator[None]:
        was_running = self.running
        self.stop()
        try:
            yield
        finally:
            if was_running:
                self.start()


@dataclass
class TrainingState:
    config: TrainConfig
    source: PointCloud
    target: PointCloud
    bundle: ModelBundle
    anchor_rng: np.random.Generator
    pair_rng: np.random.Generator
    quant0: Optional[AnchorQuantization] = None
    quant1: Optional[AnchorQuantization] = None
    plan: Optional[TransportPlan] = None
    sampler: Optional[CouplingSampler] = None
    epoch: int = 0
    step: int = 0
    refreshes: int = 0


def initial_anchor_seed(seed: int, side: int) -> int:
    """Seed of the first anchor on each side; independent of k so grids nest."""
    return derive_seed(seed, _ANCHOR_STREAM, side)


def build_anchor_plan(quant0: AnchorQuantization, quant1: AnchorQuantization, config: TrainConfig) -> TransportPlan:
    cost = cost_matrix(quant0.anchors, quant1.anchors, config.cost)
    if config.ot_mode == "exact":
        return exact_ot(cost, quant0.masses, quant1.masses)
    return sinkhorn(cost, quant0.masses, quant1.masses, config.tau)


def _install_coupling(state: TrainingState, idx0: np.ndarray, idx1: np.ndarray) -> TrainingState:
    state.quant0 = assign_cells(state.source, idx0)
    state.quant1 = assign_cells(state.target, idx1)
    state.plan = build_anchor_plan(state.quant0, state.quant1, state.config)
    state.sampler = build_anchor_coupling(state.quant0, state.quant1, state.plan)
    return state


def refresh_anchors(
    state: TrainingState, init_indices: Optional[Tuple[int, int]] = None
) -> TrainingState:
    """Re-run farthest-first from fresh (or forced) starting points and rebuild the plan."""
    k = state.config.anchors_k
    if init_indices is None:
        idx0 = farthest_first(state.source, k, seed=state.anchor_rng)
        idx1 = farthest_first(state.target, k, seed=state.anchor_rng)
    else:
        idx0 = farthest_first(state.source, k, init_index=init_indices[0])
        idx1 = farthest_first(state.target, k, init_index=init_indices[1])
    _install_coupling(state, idx0, idx1)
    state.refreshes += 1
    logger.info(
        "Anchors refreshed",
        epoch=state.epoch,
        refreshes=state.refreshes,
        radius0=state.quant0.coverage_radius,
        radius1=state.quant1.coverage_radius,
        sinkhorn_converged=state.plan.converged,
    )
    return state


class MmdEvaluator:
    """Simulates evaluation sources and compares them with evaluation targets.

    The bandwidth is fixed once from the ground-truth targets.
    """

    def __init__(self, eval_source: PointCloud, eval_target: PointCloud, config: TrainConfig,
                 bandwidth: Optional[float] = None):
        self.config = config
        self.source_points = eval_source.points[: config.eval_points]
        self.target_points = eval_target.points[: config.eval_points]
        self.bandwidth = median_bandwidth(eval_target.points) if bandwidth is None else bandwidth

    def __call__(self, bundle: ModelBundle, epoch: int) -> float:
        sim = SimConfig(
            steps=self.config.em_steps,
            sigma=self.config.sigma,
            mode=self.config.sim_mode,
            seed=derive_seed(self.config.seed, _EVAL_STREAM, epoch),
        )
        generated = simulate_chunked(ModelField(bundle), self.source_points, sim, self.config.rollout_batch)
        return mmd(generated, self.target_points, self.bandwidth)


class TrainingService:
    """Runs one seeded training job"""

    def __init__(
        self,
        config: TrainConfig,
        source: PointCloud,
        target: PointCloud,
        evaluator: Optional[Evaluator] = None,
        clock: Optional[TrainClock] = None,
    ):
        if source.d != target.d:
            raise DimensionError(f"source dimension {source.d} differs from target dimension {target.d}")
        if source.n == 0 or target.n == 0:
            raise ConfigurationError("training clouds must be non-empty")
        if config.coupling_mode == "qdsb" and config.anchors_k > min(source.n, target.n):
            raise ConfigurationError(
                f"anchors_k={config.anchors_k} exceeds cloud size {min(source.n, target.n)}"
            )
        self.config = config
        self.source = source
        self.target = target
        self.evaluator = evaluator
        self.clock = clock or TrainClock()
        self.hyper = AdamHyper(lr=config.lr, weight_decay=config.weight_decay)
        self.state: Optional[TrainingState] = None

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.source.n / self.config.batch_size)

    def build_state(self) -> TrainingState:
        cfg = self.config
        bundle = init_bundle(
            self.source.d,
            cfg.sigma,
            seed=derive_seed(cfg.seed, _INIT_STREAM),
            hidden=cfg.hidden,
        )
        self.state = TrainingState(
            config=cfg,
            source=self.source,
            target=self.target,
            bundle=bundle,
            anchor_rng=make_rng(cfg.seed, _ANCHOR_STREAM),
            pair_rng=make_rng(cfg.seed, _PAIR_STREAM),
        )
        if cfg.coupling_mode == "qdsb":
            self.build_coupling()
        return self.state

    def build_coupling(self) -> TrainingState:
        state = self.state
        k = self.config.anchors_k
        idx0 = farthest_first(self.source, k, seed=initial_anchor_seed(self.config.seed, 0))
        idx1 = farthest_first(self.target, k, seed=initial_anchor_seed(self.config.seed, 1))
        _install_coupling(state, idx0, idx1)
        logger.info(
            "Anchor coupling built",
            k=k,
            radius0=state.quant0.coverage_radius,
            radius1=state.quant1.coverage_radius,
            plan_cost=state.plan.cost_value,
            sinkhorn_iters=state.plan.n_iter,
        )
        return state

    def refresh_anchors(self, init_indices: Optional[Tuple[int, int]] = None) -> TrainingState:
        return refresh_anchors(self.state, init_indices)

    def _draw_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        rng = self.state.pair_rng
        size = cfg.batch_size
        if cfg.coupling_mode == "qdsb":
            src, tgt = sample_pair_indices(self.state.sampler, size, rng)
            return self.source.points[src], self.target.points[tgt]
        if cfg.coupling_mode == "minibatch_ot":
            batch0 = self.source.points[rng.integers(self.source.n, size=size)]
            batch1 = self.target.points[rng.integers(self.target.n, size=size)]
            return minibatch_ot_pairs(batch0, batch1, mode=cfg.ot_mode, tau=cfg.tau, seed=rng, kind=cfg.cost)
        return independent_pairs(self.source.points, self.target.points, seed=rng, size=size)

    def train_step(self) -> float:
        state = self.state
        bundle = state.bundle
        x0, x1 = self._draw_pairs()
        sample = sample_bridge(x0, x1, self.config.sigma, state.pair_rng)

        v_pred, v_cache = mlp_forward_with_cache(bundle.drift, sample.t, sample.x)
        s_pred, s_cache = mlp_forward_with_cache(bundle.score, sample.t, sample.x)
        _, _, total = loss_terms(v_pred, s_pred, sample)
        loss = float(total.mean())
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {state.step}")

        v_grads = mlp_backward(bundle.drift, sample.t, sample.x, 2.0 * (v_pred - sample.u_target), cache=v_cache)
        s_upstream = 2.0 * (sample.lam ** 2)[:, None] * (s_pred - sample.s_target)
        s_grads = mlp_backward(bundle.score, sample.t, sample.x, s_upstream, cache=s_cache)

        drift, drift_state = adamw_step(bundle.drift, v_grads, bundle.drift_state, self.hyper)
        score, score_state = adamw_step(bundle.score, s_grads, bundle.score_state, self.hyper)
        state.bundle = ModelBundle(
            drift=drift,
            score=score,
            drift_state=drift_state,
            score_state=score_state,
            sigma=bundle.sigma,
        )
        state.step += 1
        return loss

    def run_epoch(self) -> float:
        losses = [self.train_step() for _ in range(self.steps_per_epoch)]
        return float(np.mean(losses))

    def _should_refresh(self, epoch: int) -> bool:
        period = self.config.refresh_epochs
        return self.config.coupling_mode == "qdsb" and period > 0 and epoch > 1 and (epoch - 1) % period == 0

    def run(self) -> Tuple[ModelBundle, MetricsLog]:
        cfg = self.config
        log = MetricsLog()
        self.clock.start()
        self.build_state()
        state = self.state

        logger.info(
            "Training started",
            seed=cfg.seed,
            coupling=cfg.coupling_mode,
            n=self.source.n,
            epochs=cfg.epochs,
            steps_per_epoch=self.steps_per_epoch,
        )

        for epoch in range(1, cfg.epochs + 1):
            state.epoch = epoch
            if self._should_refresh(epoch):
                self.refresh_anchors()
            epoch_loss = self.run_epoch()
            log.epoch_losses.append(epoch_loss)

            over_budget = cfg.max_train_seconds is not None and self.clock.elapsed >= cfg.max_train_seconds
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs or over_budget:
                with self.clock.paused():
                    value = self.evaluator(state.bundle, epoch) if self.evaluator else math.nan
                log.append(MetricsRow(epoch=epoch, train_seconds=self.clock.elapsed, mmd=value, loss=epoch_loss))
                logger.info(
                    "Epoch evaluated",
                    epoch=epoch,
                    train_seconds=self.clock.elapsed,
                    loss=epoch_loss,
                    mmd=value,
                )
            if over_budget:
                logger.info("Training budget reached", epoch=epoch, budget=cfg.max_train_seconds)
                break

        self.clock.stop()
        return state.bundle, log


def get_training_service(
    config: TrainConfig,
    source: PointCloud,
    target: PointCloud,
    evaluator: Optional[Evaluator] = None,
) -> TrainingService:
    """Get training service instance"""
    return TrainingService(config, source, target, evaluator=evaluator)


def train(
    config: TrainConfig,
    source: PointCloud,
    target: PointCloud,
    eval_source: Optional[PointCloud] = None,
    eval_target: Optional[PointCloud] = None,
    evaluator: Optional[Evaluator] = None,
) -> Tuple[ModelBundle, MetricsLog]:
    """Train drift and score networks; evaluation defaults to the training clouds."""
    if evaluator is None:
        evaluator = MmdEvaluator(
            source if eval_source is None else eval_source,
            target if eval_target is None else eval_target,
            config,
        )
    return get_training_service(config, source, target, evaluator).run()


def mmd_at_budget(log: MetricsLog, seconds: float) -> float:
    """Last logged MMD reached within ``seconds`` of training time."""
    value = math.nan
    for row in log.rows:
        if row.train_seconds > seconds:
            break
        value = row.mmd
    return value


def budget_readouts(log: MetricsLog, budgets: Sequence[float]) -> Tuple[float, ...]:
    return tuple(mmd_at_budget(log, b) for b in budgets)
