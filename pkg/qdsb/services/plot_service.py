"""SVG figures for training curves and anchor sweeps."""

from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib as mpl  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from qdsb.core.exceptions import MissingFileError, PlotError  # noqa: E402
from qdsb.core.logging import get_logger  # noqa: E402
from qdsb.schemas.training import METRICS_COLUMNS  # noqa: E402

logger = get_logger(__name__)

SWEEP_COLUMNS = ["k", "mmd_mean", "mmd_std", "radius_median"]

# fixed ids and no timestamp keep the SVG byte-stable
_SVG_RC = {"svg.hashsalt": "qdsb", "svg.fonttype": "path", "path.simplify": False}
_SVG_METADATA = {"Date": None, "Creator": None}

PathLike = Union[str, Path]


def _read(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"plot input not found: {path}")
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise PlotError(f"{path} is empty") from None
    except pd.errors.ParserError as e:
        raise PlotError(f"{path} is not valid CSV: {e}") from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise PlotError(f"{path} lacks columns {missing}")
    if frame.empty:
        raise PlotError(f"{path} has a header but no rows")
    try:
        return frame[list(columns)].astype(float)
    except ValueError as e:
        raise PlotError(f"{path} has non-numeric values: {e}") from e


def _save(fig: Figure, out: PathLike) -> None:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata=_SVG_METADATA)
    logger.info("Figure written", path=str(out))


def plot_metrics(paths: Sequence[PathLike], out: PathLike) -> None:
    """MMD against training seconds, one polyline per metrics file."""
    if not paths:
        raise PlotError("no metrics files given")
    frames = [(Path(p).stem, _read(p, METRICS_COLUMNS)) for p in paths]
    with mpl.rc_context(_SVG_RC):
        fig = Figure(figsize=(6.0, 4.0))
        ax = fig.add_subplot()
        for label, frame in frames:
            ax.plot(frame["train_seconds"], frame["mmd"], marker="o", markersize=3, label=label)
        ax.set_xlabel("training time (s)")
        ax.set_ylabel("MMD")
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        _save(fig, out)


def plot_sweep(path: PathLike, out: PathLike) -> None:
    """Anchors vs MMD, coverage vs MMD and anchors vs coverage panels."""
    frame = _read(path, SWEEP_COLUMNS).sort_values("k")
    with mpl.rc_context(_SVG_RC):
        fig = Figure(figsize=(12.0, 3.6))
        ax_k, ax_r, ax_kr = fig.subplots(1, 3)

        ax_k.errorbar(frame["k"], frame["mmd_mean"], yerr=frame["mmd_std"].fillna(0.0),
                      marker="o", capsize=3, label="MMD")
        ax_k.set_xscale("log", base=2)
        ax_k.set_xlabel("anchors k")
        ax_k.set_ylabel("MMD")

        ax_r.plot(frame["radius_median"], frame["mmd_mean"], marker="o", label="MMD")
        ax_r.set_xlabel("coverage radius")
        ax_r.set_ylabel("MMD")

        ax_kr.plot(frame["k"], frame["radius_median"], marker="o", label="coverage radius")
        ax_kr.set_xscale("log", base=2)
        ax_kr.set_xlabel("anchors k")
        ax_kr.set_ylabel("coverage radius")

        for ax in (ax_k, ax_r, ax_kr):
            ax.grid(True, alpha=0.3)
            ax.legend()
        fig.tight_layout()
        _save(fig, out)


def detect_kind(path: PathLike) -> str:
    try:
        header = pd.read_csv(path, nrows=0).columns.tolist()
    except pd.errors.EmptyDataError:
        raise PlotError(f"{path} is empty") from None
    if all(c in header for c in SWEEP_COLUMNS):
        return "sweep"
    if all(c in header for c in METRICS_COLUMNS):
        return "metrics"
    raise PlotError(f"{path}: unrecognised header {header}")


def render(paths: Sequence[PathLike], out: PathLike) -> str:
    """Pick the figure type from the inputs' headers."""
    if not paths:
        raise PlotError("no inputs given")
    for p in paths:
        if not Path(p).is_file():
            raise MissingFileError(f"plot input not found: {p}")
    kinds: List[str] = [detect_kind(p) for p in paths]
    if "sweep" in kinds:
        if len(paths) != 1:
            raise PlotError("sweep plots take exactly one CSV")
        plot_sweep(paths[0], out)
        return "sweep"
    plot_metrics(paths, out)
    return "metrics"
