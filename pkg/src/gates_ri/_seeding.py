"""Deterministic sub-seed derivation shared by every stochastic routine."""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer ``keys`` into a fresh 63-bit seed.

    The mixing goes through :class:`numpy.random.SeedSequence`, so the result
    depends only on the inputs and not on call order or scheduling.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
