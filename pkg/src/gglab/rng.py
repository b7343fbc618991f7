"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox-4x64 stream whose
128-bit key is ``(seed, index << 16 | tag)``; the Philox counter is the draw
counter. Uniforms are ``((x >> 11) + 0.5) * 2**-53`` for each raw 64-bit word
``x`` (strictly inside (0, 1)) and gaussians are the inverse normal CDF of
those uniforms. Consequently the value of draw ``k`` of stream
``(seed, index, tag)`` depends on nothing else: not on execution order, not on
how many other streams were consumed.
"""

import numpy as np
from scipy.special import ndtri

# stream tags
BASE = 1
PERTURBATION = 2
REPLICA = 3
MCMC = 4
PROBE = 5
GAUSSIAN_MC = 6
MCMC_INIT = 7

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, index: int = 0, tag: int = 0) -> np.ndarray:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    if index >= 1 << 48:
        raise ValueError("stream index too large")
    return np.array([seed & _MASK64, ((index << 16) | (tag & 0xFFFF)) & _MASK64], dtype=np.uint64)


def bit_generator(seed: int, index: int = 0, tag: int = 0) -> np.random.Philox:
    return np.random.Philox(key=stream_key(seed, index, tag))


def generator(seed: int, index: int = 0, tag: int = 0) -> np.random.Generator:
    """numpy Generator on top of the keyed Philox stream (used for sampler streams)."""
    return np.random.Generator(bit_generator(seed, index, tag))


def uniforms(seed: int, index: int, tag: int, count: int) -> np.ndarray:
    raw = bit_generator(seed, index, tag).random_raw(count)
    raw = np.atleast_1d(np.asarray(raw, dtype=np.uint64))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def gaussians(seed: int, index: int, tag: int, count: int) -> np.ndarray:
    """First ``count`` standard normals of stream ``(seed, index, tag)``."""
    if count == 0:
        return np.zeros(0)
    return ndtri(uniforms(seed, index, tag, count))
