"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed directly by a
64-bit seed. Gaussian draws use the Box-Muller transform on the stream's
uniforms so the normal sampler does not depend on numpy's internal ziggurat.
Sub-task seeds are ``hash64(master_seed, tag, index)`` with ``hash64`` the
first 8 bytes of BLAKE2b over ``"{master}:{tag}:{index}"``, little endian.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def hash64(*parts) -> int:
    text = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def child_seed(master_seed: int, tag: str, index: int = 0) -> int:
    return hash64(int(master_seed) & MASK64, tag, int(index))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def uniform(rng: np.random.Generator, low, high, size) -> np.ndarray:
    return low + (high - low) * rng.random(size)


def normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normals via Box-Muller, two per uniform pair."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:count].reshape(shape)
