"""Counter-based random numbers keyed by tree-node address.

The generator is SplitMix64 used as a hash: output k of a stream with key
``key`` is ``mix64(key + (k + 1) * GOLDEN)``.  A node at depth n with
address (u, v) gets the key ``mix64(depth_key(n) ^ ((u << 32) | v))``, so
any node's draws can be recomputed without touching the rest of the tree.
All arithmetic is vectorised over uint64 arrays (wrapping modulo 2^64).
"""

from __future__ import annotations

import functools

import numpy as np
from scipy.special import ndtri

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S32, _S11 = np.uint64(32), np.uint64(11)
_TWO_M53 = 2.0 ** -53

MAX_ADDRESS = 2 ** 32


def _wrapping(fn):
    @functools.wraps(fn)
    def inner(*args, **kwargs):
        with np.errstate(over="ignore"):
            return fn(*args, **kwargs)
    return inner


@_wrapping
def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_wrapping
def splitmix64_sequence(state: int, count: int) -> np.ndarray:
    """Reference sequential SplitMix64 outputs (used for known-answer tests)."""
    states = np.uint64(state) + GOLDEN * np.arange(1, count + 1, dtype=np.uint64)
    return mix64(states)


@_wrapping
def stream_key(seed: int, *labels: int) -> np.uint64:
    """Derive a 64-bit key from a seed and a sequence of integer labels."""
    key = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for lab in labels:
        key = mix64(key ^ mix64(np.uint64(lab & 0xFFFFFFFFFFFFFFFF) + GOLDEN))
    return np.uint64(key)


@_wrapping
def node_keys(base: np.uint64, depth: int, u, v) -> np.ndarray:
    """Keys for nodes at ``depth`` with addresses u, v (integer arrays)."""
    dkey = mix64(np.uint64(base) + GOLDEN * np.uint64(depth + 1))
    packed = (np.asarray(u, dtype=np.uint64) << _S32) | np.asarray(v, dtype=np.uint64)
    return mix64(dkey ^ packed)


@_wrapping
def raw(keys, k: int) -> np.ndarray:
    """k-th 64-bit output of each keyed stream."""
    return mix64(np.asarray(keys, dtype=np.uint64) + GOLDEN * np.uint64(k + 1))


def uniform(keys, k: int) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    return ((raw(keys, k) >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def normal(keys, k: int) -> np.ndarray:
    return ndtri(uniform(keys, k))
