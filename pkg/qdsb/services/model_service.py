"""Time-conditioned MLPs with hand-written backprop and AdamW."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from qdsb.core.config import settings
from qdsb.core.exceptions import CheckpointError, ShapeError
from qdsb.core.logging import get_logger
from qdsb.schemas.model import AdamHyper, AdamState, MlpParams, ModelBundle
from qdsb.services.bridge_service import probability_flow_velocity

logger = get_logger(__name__)

DEFAULT_HIDDEN = (64, 64)

Cache = Dict[str, List[np.ndarray]]


def mlp_init(
    d: int,
    seed=None,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    activation: str = "silu",
) -> MlpParams:
    """Layers (d+1) -> hidden... -> d, weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    if d < 1:
        raise ShapeError(f"output dimension must be >= 1, got {d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    widths = [d + 1, *hidden, d]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, activation=activation)


def _silu(h: np.ndarray) -> np.ndarray:
    return h * expit(h)


def _silu_grad(h: np.ndarray) -> np.ndarray:
    s = expit(h)
    return s * (1.0 + h * (1.0 - s))


def _dense(z: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row-by-row products: a row's output never depends on the rest of the batch
    return np.matmul(z[:, None, :], w)[:, 0, :] + b


def _inputs(t, x: np.ndarray, d: int) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"expected inputs of shape (batch, {d}), got {x.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    return np.concatenate([x, t[:, None]], axis=1)


def mlp_forward_with_cache(params: MlpParams, t, x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    act = _silu if params.activation == "silu" else (lambda h: h)
    z = _inputs(t, np.asarray(x, dtype=np.float64), params.d)
    cache: Cache = {"inputs": [], "pre": []}
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache["inputs"].append(z)
        h = _dense(z, w, b)
        if i == last:
            return h, cache
        cache["pre"].append(h)
        z = act(h)
    raise ShapeError("network has no layers")


def mlp_forward(params: MlpParams, t, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one point (d,) or a batch (B, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        out, _ = mlp_forward_with_cache(params, np.reshape(t, (1,)), x[None, :])
        return out[0]
    out, _ = mlp_forward_with_cache(params, t, x)
    return out


def mlp_backward(
    params: MlpParams,
    t,
    x: np.ndarray,
    upstream: np.ndarray,
    cache: Optional[Cache] = None,
) -> List[np.ndarray]:
    """Gradients of mean_b <upstream_b, f(t_b, x_b)> in MlpParams.tensors() order."""
    x = np.asarray(x, dtype=np.float64)
    if cache is None:
        out, cache = mlp_forward_with_cache(params, t, x)
    else:
        out = None
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = (x.shape[0], params.d)
    if upstream.shape != expected:
        raise ShapeError(f"upstream gradient shape {upstream.shape} does not match output {expected}")
    if out is not None and out.shape != expected:
        raise ShapeError("forward output shape mismatch")

    batch = x.shape[0]
    n_layers = len(params.weights)
    grads: List[Optional[np.ndarray]] = [None] * (2 * n_layers)
    delta = upstream
    for i in reversed(range(n_layers)):
        grads[2 * i] = cache["inputs"][i].T @ delta / batch
        grads[2 * i + 1] = delta.sum(axis=0) / batch
        if i:
            delta = delta @ params.weights[i].T
            if params.activation == "silu":
                delta = delta * _silu_grad(cache["pre"][i - 1])
    return grads


def adamw_init(params: MlpParams) -> AdamState:
    tensors = params.tensors()
    return AdamState(
        first_moment=[np.zeros_like(p) for p in tensors],
        second_moment=[np.zeros_like(p) for p in tensors],
        step=0,
    )


def adamw_step(
    params: MlpParams,
    grads: List[np.ndarray],
    state: AdamState,
    hyper: AdamHyper,
) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam step with decoupled weight decay."""
    tensors = params.tensors()
    if len(grads) != len(tensors):
        raise ShapeError(f"expected {len(tensors)} gradient tensors, got {len(grads)}")
    step = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step

    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(tensors, grads, state.first_moment, state.second_moment):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)
        new_params.append(p - hyper.lr * (update + hyper.weight_decay * p))
        new_m.append(m)
        new_v.append(v)

    return (
        MlpParams.from_tensors(new_params, activation=params.activation),
        AdamState(first_moment=new_m, second_moment=new_v, step=step),
    )


def init_bundle(d: int, sigma: float, seed=None, hidden: Sequence[int] = DEFAULT_HIDDEN) -> ModelBundle:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    drift = mlp_init(d, rng, hidden)
    score = mlp_init(d, rng, hidden)
    return ModelBundle(
        drift=drift,
        score=score,
        drift_state=adamw_init(drift),
        score_state=adamw_init(score),
        sigma=sigma,
    )


class ModelField:
    """Drift/score view of a bundle for the integrator.

    `drift` is the probability-flow velocity built from both networks.
    """

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        times = np.full(x.shape[0], t)
        v = mlp_forward(self.bundle.drift, times, x)
        return probability_flow_velocity(v, mlp_forward(self.bundle.score, times, x), t, self.bundle.sigma)

    def score(self, t: float, x: np.ndarray) -> np.ndarray:
        return mlp_forward(self.bundle.score, np.full(x.shape[0], t), x)


def _pack(prefix: str, params: MlpParams, state: AdamState) -> Dict[str, np.ndarray]:
    arrays = {f"{prefix}_param_{i}": p for i, p in enumerate(params.tensors())}
    arrays.update({f"{prefix}_m_{i}": m for i, m in enumerate(state.first_moment)})
    arrays.update({f"{prefix}_v_{i}": v for i, v in enumerate(state.second_moment)})
    arrays[f"{prefix}_step"] = np.array(state.step)
    return arrays


def _unpack(archive, prefix: str, count: int, activation: str) -> Tuple[MlpParams, AdamState]:
    params = [archive[f"{prefix}_param_{i}"] for i in range(count)]
    first = [archive[f"{prefix}_m_{i}"] for i in range(count)]
    second = [archive[f"{prefix}_v_{i}"] for i in range(count)]
    return (
        MlpParams.from_tensors(params, activation=activation),
        AdamState(first_moment=first, second_moment=second, step=int(archive[f"{prefix}_step"])),
    )


def save_checkpoint(bundle: ModelBundle, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "magic": np.array(settings.CHECKPOINT_MAGIC),
        "version": np.array(settings.CHECKPOINT_VERSION),
        "d": np.array(bundle.d),
        "hidden": np.array(bundle.drift.hidden, dtype=np.int64),
        "sigma": np.array(bundle.sigma),
        "activation": np.array(bundle.drift.activation),
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            **header,
            **_pack("drift", bundle.drift, bundle.drift_state),
            **_pack("score", bundle.score, bundle.score_state),
        )


def load_checkpoint(
    path: Union[str, Path],
    d: Optional[int] = None,
    hidden: Optional[Sequence[int]] = None,
    sigma: Optional[float] = None,
) -> ModelBundle:
    """Restore a bundle, rejecting files whose header disagrees with the request."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e

    with archive:
        if "magic" not in archive or str(archive["magic"]) != settings.CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a model checkpoint")
        if int(archive["version"]) != settings.CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {int(archive['version'])}")
        stored_d = int(archive["d"])
        stored_hidden = tuple(int(h) for h in archive["hidden"])
        stored_sigma = float(archive["sigma"])
        if d is not None and d != stored_d:
            raise CheckpointError(f"checkpoint dimension {stored_d} does not match {d}")
        if hidden is not None and tuple(hidden) != stored_hidden:
            raise CheckpointError(f"checkpoint hidden widths {stored_hidden} do not match {tuple(hidden)}")
        if sigma is not None and sigma != stored_sigma:
            raise CheckpointError(f"checkpoint sigma {stored_sigma} does not match {sigma}")

        count = 2 * (len(stored_hidden) + 1)
        activation = str(archive["activation"])
        drift, drift_state = _unpack(archive, "drift", count, activation)
        score, score_state = _unpack(archive, "score", count, activation)

    bundle = ModelBundle(
        drift=drift,
        score=score,
        drift_state=drift_state,
        score_state=score_state,
        sigma=stored_sigma,
    )
    logger.debug("Loaded checkpoint", path=str(path), d=stored_d, hidden=stored_hidden)
    return bundle
