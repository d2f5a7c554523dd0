"""Synthetic point-cloud generators and the CSV interchange format."""

from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np

from qdsb.core.config import settings
from qdsb.core.exceptions import (
    ConfigurationError,
    DimensionError,
    EmptyDataError,
    MissingFileError,
    NonFiniteValueError,
    NonNumericTokenError,
    RaggedRowError,
)
from qdsb.core.logging import get_logger
from qdsb.core.seeding import derive_seed
from qdsb.schemas.data import PointCloud

logger = get_logger(__name__)

EIGHT_GAUSSIANS_RADIUS = 3.0
EIGHT_GAUSSIANS_STD = 0.3
MOONS_NOISE = 0.05
MOONS_SCALE = 3.0
# mean of the noiseless two-arc shape before rescaling
MOONS_CENTER = np.array([0.5, 0.25])


def _check_n(n: int) -> None:
    if n < 0:
        raise ConfigurationError(f"sample count must be non-negative, got {n}")


def eight_gaussian_centers() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    return EIGHT_GAUSSIANS_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_eight_gaussians(n: int, seed: int) -> PointCloud:
    """Equal mixture of 8 isotropic Gaussians on a circle of radius 3."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    component = rng.integers(0, 8, size=n)
    noise = rng.standard_normal((n, 2))
    points = eight_gaussian_centers()[component] + EIGHT_GAUSSIANS_STD * noise
    return PointCloud(points=points.reshape(n, 2))


def gen_moons(n: int, seed: int) -> PointCloud:
    """Two interleaved half circles, centred and scaled by 3."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    upper = rng.random(n) < 0.5
    theta = np.pi * rng.random(n)
    arcs = np.where(
        upper[:, None],
        np.stack([np.cos(theta), np.sin(theta)], axis=1),
        np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1),
    )
    points = arcs.reshape(n, 2) + MOONS_NOISE * rng.standard_normal((n, 2))
    return PointCloud(points=MOONS_SCALE * (points - MOONS_CENTER))


def gen_gaussian(n: int, seed: int, d: int = 2) -> PointCloud:
    _check_n(n)
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    return PointCloud(points=rng.standard_normal((n, d)))


# Registry of benchmark tasks: name -> (source generator, target generator)
TASKS: Dict[str, Tuple[Callable[[int, int], PointCloud], Callable[[int, int], PointCloud]]] = {
    "8g-moons": (gen_eight_gaussians, gen_moons),
    "g-moons": (gen_gaussian, gen_moons),
    "g-8g": (gen_gaussian, gen_eight_gaussians),
}


def make_task(task: str, n: int, seed: int, split: int = 0) -> Tuple[PointCloud, PointCloud]:
    """Source and target clouds for a benchmark task, on independent streams."""
    if task not in TASKS:
        raise ConfigurationError(f"Unknown task {task!r}; expected one of {sorted(TASKS)}")
    make_source, make_target = TASKS[task]
    source = make_source(n, derive_seed(seed, split, 0))
    target = make_target(n, derive_seed(seed, split, 1))
    return source, target


def generate_task_data(task: str, n_train: int, n_eval: int, seed: int) -> Dict[str, PointCloud]:
    source_train, target_train = make_task(task, n_train, seed, split=0)
    source_eval, target_eval = make_task(task, n_eval, seed, split=1)
    return {
        "source_train": source_train,
        "target_train": target_train,
        "source_eval": source_eval,
        "target_eval": target_eval,
    }


def save_csv(cloud: PointCloud, path: Union[str, Path]) -> None:
    """One sample per row, comma separated, round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if cloud.n == 0:
        path.write_text("")
        return
    fmt = f"%.{settings.CSV_PRECISION}g"
    np.savetxt(path, cloud.points, fmt=fmt, delimiter=",")


def load_csv(path: Union[str, Path]) -> PointCloud:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"Data file not found: {path}")

    rows = []
    width = None
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        tokens = [token.strip() for token in line.split(",")]
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise RaggedRowError(str(path), line_no, width, len(tokens))
        values = []
        for token in tokens:
            try:
                values.append(float(token))
            except ValueError:
                raise NonNumericTokenError(str(path), line_no, token) from None
        rows.append(values)

    if not rows:
        raise EmptyDataError(f"{path}: no rows, dimension cannot be inferred (d=0)")

    points = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        bad_row = int(np.flatnonzero(~np.all(np.isfinite(points), axis=1))[0])
        raise NonFiniteValueError(f"{path}: non-finite value in data row {bad_row + 1}")

    logger.debug("Loaded point cloud", path=str(path), n=points.shape[0], d=points.shape[1])
    return PointCloud(points=points)
