"""Seedable parameter initialisers."""

import numpy as np


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def zeros(*shape) -> np.ndarray:
    return np.zeros(shape, dtype=np.float64)
