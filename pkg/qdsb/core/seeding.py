import numpy as np


def derive_seed(seed: int, *stream: int) -> int:
    """Deterministic 63-bit child seed for a named sub-stream of ``seed``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *stream))
