"""Orchestration behind the gen, train, sweep, verify and plot commands."""

import inspect
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from qdsb.core.config import dump_config_file, settings
from qdsb.core.exceptions import ConfigurationError, DataError, QdsbError
from qdsb.core.logging import get_logger
from qdsb.schemas.data import PointCloud
from qdsb.schemas.training import RunManifest, TrainConfig
from qdsb.schemas.verification import StabilityReport
from qdsb.services.anchor_service import coverage_radius_of, farthest_first
from qdsb.services.dataset_service import generate_task_data, load_csv, save_csv
from qdsb.services.evaluation_service import median_bandwidth
from qdsb.services.model_service import save_checkpoint
from qdsb.services.plot_service import render
from qdsb.services.training_service import (
    MmdEvaluator,
    TrainingService,
    budget_readouts,
    initial_anchor_seed,
)
from qdsb.services.verification_service import run_suite

logger = get_logger(__name__)

DATA_SPLITS = ("source_train", "target_train", "source_eval", "target_eval")
RESOLVED_CONFIG = "resolved_config.txt"


class SeedResult(BaseModel):
    seed: int
    final_mmd: float
    budget_mmd: List[float] = Field(default_factory=list)
    train_seconds: float = 0.0
    metrics_path: Path
    checkpoint_path: Path


class TrainSummary(BaseModel):
    results: List[SeedResult] = Field(default_factory=list)
    failures: Dict[int, str] = Field(default_factory=dict)
    budgets: List[float] = Field(default_factory=list)
    line: str = ""


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation; a single value has spread 0."""
    series = pd.Series(list(values), dtype=float)
    if series.empty:
        return math.nan, math.nan
    std = float(series.std(ddof=1)) if len(series) > 1 else 0.0
    return float(series.mean()), std


def cmd_gen(task: str, n_train: int, n_eval: int, seed: int, out_dir: Path) -> List[Path]:
    """Write source/target x train/eval CSVs for a synthetic task."""
    data = generate_task_data(task, n_train, n_eval, seed)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create output directory {out_dir}: {e}") from e
    written = []
    for split in DATA_SPLITS:
        path = out_dir / f"{task}_{split}.csv"
        save_csv(data[split], path)
        written.append(path)
    values = {"task": task, "n_train": n_train, "n_eval": n_eval, "seed": seed}
    write_resolved_config(values, out_dir / RESOLVED_CONFIG)
    logger.info("Task data written", task=task, n_train=n_train, n_eval=n_eval, seed=seed, out=str(out_dir))
    return written


def load_manifest_data(manifest: RunManifest) -> Dict[str, PointCloud]:
    if manifest.task != "csv":
        return generate_task_data(manifest.task, manifest.n_train, manifest.n_eval, manifest.data_seed)
    source = load_csv(manifest.source_path)
    target = load_csv(manifest.target_path)
    return {
        "source_train": source,
        "target_train": target,
        "source_eval": load_csv(manifest.eval_source_path) if manifest.eval_source_path else source,
        "target_eval": load_csv(manifest.eval_target_path) if manifest.eval_target_path else target,
    }


def run_seed(
    manifest: RunManifest,
    seed: int,
    data: Dict[str, PointCloud],
    bandwidth: float,
) -> SeedResult:
    """Train one seed and write its metrics and checkpoint."""
    config = manifest.config.model_copy(update={"seed": seed})
    evaluator = MmdEvaluator(data["source_eval"], data["target_eval"], config, bandwidth=bandwidth)
    service = TrainingService(config, data["source_train"], data["target_train"], evaluator=evaluator)
    bundle, log = service.run()

    # final readout on the full evaluation populations
    full = config.model_copy(update={"eval_points": max(data["source_eval"].n, data["target_eval"].n)})
    final_eval = MmdEvaluator(data["source_eval"], data["target_eval"], full, bandwidth=bandwidth)
    final_mmd = final_eval(bundle, config.epochs + 1)

    out_dir = Path(manifest.output_dir)
    metrics_path = out_dir / f"metrics_seed{seed}.csv"
    checkpoint_path = out_dir / f"model_seed{seed}.npz"
    log.to_csv(metrics_path)
    save_checkpoint(bundle, checkpoint_path)
    logger.info("Seed finished", seed=seed, final_mmd=final_mmd, train_seconds=service.clock.elapsed)
    return SeedResult(
        seed=seed,
        final_mmd=final_mmd,
        budget_mmd=list(budget_readouts(log, settings.BUDGET_SECONDS)),
        train_seconds=service.clock.elapsed,
        metrics_path=metrics_path,
        checkpoint_path=checkpoint_path,
    )


def _format_summary(results: Sequence[SeedResult], budgets: Sequence[float]) -> str:
    parts = []
    mean, std = mean_std([r.final_mmd for r in results])
    parts.append(f"MMD {mean:.4f} ± {std:.4f}")
    for i, budget in enumerate(budgets):
        mean, std = mean_std([r.budget_mmd[i] for r in results])
        parts.append(f"after {budget:g}s {mean:.4f} ± {std:.4f}")
    seconds, _ = mean_std([r.train_seconds for r in results])
    parts.append(f"time {seconds:.1f}s")
    return " | ".join(parts)


def resolved_values(manifest: RunManifest) -> Dict[str, object]:
    values: Dict[str, object] = {
        "task": manifest.task,
        "seeds": manifest.seeds,
        "n_train": manifest.n_train,
        "n_eval": manifest.n_eval,
        "data_seed": manifest.data_seed,
        "workers": manifest.workers,
        "source": manifest.source_path,
        "target": manifest.target_path,
        "eval_source": manifest.eval_source_path,
        "eval_target": manifest.eval_target_path,
    }
    values.update(manifest.config.model_dump(exclude={"seed"}))
    return values


def sidecar_config_path(out_path: Path) -> Path:
    """`<stem>_resolved_config.txt` next to a single output file."""
    out_path = Path(out_path)
    return out_path.with_name(f"{out_path.stem}_{RESOLVED_CONFIG}")


def write_resolved_config(values: Dict[str, object], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_config_file(values, path)
    logger.debug("Resolved configuration written", path=str(path))
    return path


def cmd_train(manifest: RunManifest) -> TrainSummary:
    """Train every seed of a manifest and summarise the final MMDs."""
    out_dir = Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(resolved_values(manifest), out_dir / RESOLVED_CONFIG)

    data = load_manifest_data(manifest)
    bandwidth = median_bandwidth(data["target_eval"].points)
    logger.info("Bandwidth fixed", task=manifest.task, bandwidth=bandwidth)

    summary = TrainSummary(budgets=list(settings.BUDGET_SECONDS))
    if manifest.workers > 1 and len(manifest.seeds) > 1:
        with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
            futures = {pool.submit(run_seed, manifest, s, data, bandwidth): s for s in manifest.seeds}
            for future in as_completed(futures):
                seed = futures[future]
                try:
                    summary.results.append(future.result())
                except QdsbError as e:
                    logger.error(f"Seed {seed} failed: {e}")
                    summary.failures[seed] = str(e)
    else:
        for seed in manifest.seeds:
            try:
                summary.results.append(run_seed(manifest, seed, data, bandwidth))
            except QdsbError as e:
                logger.error(f"Seed {seed} failed: {e}")
                summary.failures[seed] = str(e)

    summary.results.sort(key=lambda r: r.seed)
    if summary.results:
        summary.line = _format_summary(summary.results, summary.budgets)
        frame = pd.DataFrame(
            [
                {
                    "seed": r.seed,
                    "final_mmd": r.final_mmd,
                    **{f"mmd_after_{b:g}s": v for b, v in zip(summary.budgets, r.budget_mmd)},
                    "train_seconds": r.train_seconds,
                }
                for r in summary.results
            ]
        )
        frame.to_csv(out_dir / "summary.csv", index=False, float_format="%.17g")
    return summary


def cmd_sweep(
    task: str,
    k_list: Sequence[int],
    epochs: int,
    seeds: Sequence[int],
    out_path: Path,
    base_config: Optional[TrainConfig] = None,
    n_train: Optional[int] = None,
    n_eval: Optional[int] = None,
    data_seed: Optional[int] = None,
) -> pd.DataFrame:
    """One run per (k, seed); rows of k, mean/std final MMD and median coverage radius."""
    base_config = base_config or TrainConfig()
    manifest = RunManifest(
        task=task,
        config=base_config,
        seeds=list(seeds),
        n_train=n_train or settings.N_TRAIN,
        n_eval=n_eval or settings.N_EVAL,
        data_seed=settings.DATA_SEED if data_seed is None else data_seed,
    )
    data = load_manifest_data(manifest)
    source, target = data["source_train"], data["target_train"]
    bandwidth = median_bandwidth(data["target_eval"].points)
    limit = min(source.n, target.n)

    rows = []
    for k in k_list:
        if k < 1 or k > limit:
            logger.warning("Skipping anchor count", k=k, n=limit)
            continue
        values, radii = [], []
        for seed in seeds:
            config = base_config.model_copy(update={"anchors_k": k, "epochs": epochs, "seed": seed,
                                                    "coupling_mode": "qdsb"})
            evaluator = MmdEvaluator(data["source_eval"], data["target_eval"], config, bandwidth=bandwidth)
            bundle, _ = TrainingService(config, source, target, evaluator=evaluator).run()
            values.append(evaluator(bundle, epochs + 1))
            for side, cloud in enumerate((source, target)):
                anchors = farthest_first(cloud, k, seed=initial_anchor_seed(seed, side))
                radii.append(coverage_radius_of(cloud, anchors))
        mean, std = mean_std(values)
        rows.append({"k": k, "mmd_mean": mean, "mmd_std": std, "radius_median": float(np.median(radii))})
        logger.info("Sweep point", k=k, mmd_mean=mean, mmd_std=std, radius_median=rows[-1]["radius_median"])

    frame = pd.DataFrame(rows, columns=["k", "mmd_mean", "mmd_std", "radius_median"])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_path, index=False, float_format="%.17g")
    values = resolved_values(manifest)
    values.update({"epochs": epochs, "k_list": list(k_list)})
    write_resolved_config(values, sidecar_config_path(out_path))
    return frame


def cmd_verify(out_path: Path, inject_fault: bool = False, seed: int = 0, **scale) -> StabilityReport:
    report = run_suite(seed=seed, inject_fault=inject_fault, **scale)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_path)
    values = {
        name: param.default for name, param in inspect.signature(run_suite).parameters.items()
    }
    values.update(scale, seed=seed, inject_fault=inject_fault)
    write_resolved_config(values, sidecar_config_path(out_path))
    return report


def cmd_plot(paths: Sequence[Path], out_path: Path) -> str:
    if not paths:
        raise ConfigurationError("plot needs at least one input CSV")
    return render(paths, out_path)
