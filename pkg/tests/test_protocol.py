"""Full-scale benchmark runs; minutes per seed on one core."""

import math
from functools import lru_cache

import numpy as np
import pytest

from qdsb.core.config import settings
from qdsb.schemas.training import RunManifest, TrainConfig
from qdsb.services.anchor_service import coverage_radius_of, farthest_first
from qdsb.services.dataset_service import make_task
from qdsb.services.experiment_service import cmd_train
from qdsb.services.training_service import TrainingService, initial_anchor_seed

TASKS = ["8g-moons", "g-moons", "g-8g"]
MMD_BAR = 0.05

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def final_mmd(tmp_path_factory):
    """Mean final MMD over the default seeds, one cached run per (task, coupling, k)."""

    @lru_cache(maxsize=None)
    def run(task: str, coupling: str = "qdsb", k: int = 256) -> float:
        out = tmp_path_factory.mktemp(f"{task}-{coupling}-{k}")
        config = TrainConfig(coupling_mode=coupling, anchors_k=k)
        summary = cmd_train(RunManifest(task=task, config=config, output_dir=out))
        assert not summary.failures
        values = [r.final_mmd for r in summary.results]
        assert all(math.isfinite(v) for v in values)
        return float(np.mean(values))

    return run


@pytest.mark.parametrize("task", TASKS)
def test_final_mmd_within_bar(final_mmd, task):
    assert final_mmd(task) <= MMD_BAR


def test_more_anchors_beat_one(final_mmd):
    assert final_mmd("8g-moons", k=256) < final_mmd("8g-moons", k=1)


@pytest.mark.parametrize("task", TASKS)
def test_no_worse_than_independent(final_mmd, task):
    assert final_mmd(task) <= final_mmd(task, coupling="independent")


def test_radius_shrinks_with_anchors():
    source, target = make_task("8g-moons", settings.N_TRAIN, settings.DATA_SEED)
    medians = []
    for k in (1, 4, 16, 64, 256, 1024):
        radii = [
            coverage_radius_of(cloud, farthest_first(cloud, k, seed=initial_anchor_seed(seed, side)))
            for seed in settings.DEFAULT_SEEDS
            for side, cloud in enumerate((source, target))
        ]
        medians.append(float(np.median(radii)))
    assert all(b <= a for a, b in zip(medians, medians[1:]))


def test_loss_decreases():
    source, target = make_task("8g-moons", settings.N_TRAIN, settings.DATA_SEED)
    _, log = TrainingService(TrainConfig(), source, target).run()
    assert np.mean(log.epoch_losses[-10:]) < np.mean(log.epoch_losses[:10])
