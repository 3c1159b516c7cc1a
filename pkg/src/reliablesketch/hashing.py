"""Seeded 64-bit hashing shared by every structure in the package.

All hashing goes through one mixer (the splitmix64 finalizer) so that the
Python-side helpers and the compiled kernels produce bit-identical bucket
indices. Keys are unsigned 64-bit integers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True, inline="always")
def mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def seeded_hash(seed, key):
    # two rounds so that seeds differing in a few bits still give unrelated maps
    return mix64(mix64(key) ^ seed)


@njit(cache=True, inline="always")
def bucket_index(seed, key, width):
    return np.int64(seeded_hash(seed, key) % np.uint64(width))


def as_key(key) -> np.uint64:
    """Coerce a Python int (or numpy integer) into a 64-bit key."""
    k = int(key)
    if k < 0 or k > MASK64:
        raise ValueError(f"key {key!r} is not an unsigned 64-bit integer")
    return np.uint64(k)


def hash64(seed: int, key: int) -> int:
    return int(seeded_hash(np.uint64(seed & MASK64), as_key(key)))


def derive_seed(master: int, tag: int) -> int:
    """Derive an independent sub-seed (per layer, per filter row, ...)."""
    return hash64(master & MASK64, tag & MASK64)


def key_from_bytes(data: bytes | str) -> int:
    """Map an arbitrary byte string to a 64-bit key (FNV-1a then mixed)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return int(mix64(np.uint64(h)))


@njit(cache=True)
def _hash_array(seed, keys, out):
    for i in range(keys.shape[0]):
        out[i] = seeded_hash(seed, keys[i])


def hash_array(seed: int, keys) -> np.ndarray:
    """Vectorised :func:`hash64` over a uint64 array."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    out = np.empty_like(keys)
    _hash_array(np.uint64(seed & MASK64), keys, out)
    return out
