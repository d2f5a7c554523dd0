import numpy as np
import pytest

from qdsb.schemas.data import PointCloud
from qdsb.schemas.training import TrainConfig


def cloud_of(values) -> PointCloud:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return PointCloud(points=arr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line_cloud():
    """The 1-D cloud {0, 1, 10}."""
    return cloud_of([0.0, 1.0, 10.0])


@pytest.fixture
def small_clouds(rng):
    source = PointCloud(points=rng.standard_normal((96, 2)))
    target = PointCloud(points=rng.standard_normal((96, 2)) + 3.0)
    return source, target


@pytest.fixture
def tiny_config():
    return TrainConfig(
        anchors_k=8,
        refresh_epochs=2,
        epochs=3,
        batch_size=32,
        lr=1e-3,
        eval_every=1,
        eval_points=64,
        em_steps=10,
        rollout_batch=32,
        hidden=[16, 16],
        seed=7,
    )
