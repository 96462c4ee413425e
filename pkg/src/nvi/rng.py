"""Seeded random streams.

Streams are numpy ``Generator`` objects over the counter-based Philox bit
generator, so a (seed, stream) pair names the same sequence on every
platform.  Gaussian noise comes from Box-Muller on the stream's uniforms
rather than numpy's ziggurat sampler.
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox"


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent stream ``stream`` of the generator seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(stream)]))


def standard_normal(rng: np.random.Generator, shape, dtype=np.float64) -> np.ndarray:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    n = int(np.prod(shape, dtype=np.int64))
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
    return z.reshape(shape).astype(dtype, copy=False)


def bernoulli_mask(rng: np.random.Generator, shape, keep: float, dtype=np.float64) -> np.ndarray:
    return (rng.random(shape) < keep).astype(dtype)
