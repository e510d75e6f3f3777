"""Counter-based random streams.

Every trajectory owns a stream addressed by ``(stream_key, trajectory index)``
so a batch yields the same numbers however it is chunked or threaded.
Stream keys come from ``numpy.random.SeedSequence`` over
``(master seed, phase, node, extra...)``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# phase ids used in stream derivation
PHASE_FIT = 1
PHASE_SOLVE = 2
PHASE_TOPUP = 3
PHASE_PILOT = 4
PHASE_KAPPA = 5
PHASE_TEST = 9


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def trajectory_state(stream_key, index):
    """Initial counter for trajectory ``index`` of a stream."""
    return mix64(stream_key + mix64(np.uint64(index) * GOLDEN + GOLDEN))


@njit(cache=True, nogil=True)
def next_uniform(state):
    """Advance the counter; returns ``(new_state, u)`` with ``u`` in (0, 1]."""
    state = state + GOLDEN
    z = mix64(state)
    return state, (np.float64(z >> _S11) + 1.0) * _TWO_M53


@njit(cache=True, nogil=True)
def next_normal_pair(state):
    """Two independent standard normals (Box-Muller)."""
    state, u1 = next_uniform(state)
    state, u2 = next_uniform(state)
    r = math.sqrt(-2.0 * math.log(u1))
    t = 2.0 * math.pi * u2
    return state, r * math.cos(t), r * math.sin(t)


@njit(cache=True, nogil=True)
def fill_normals(stream_key, start, out):
    """Fill ``out`` (shape (n, 2)) with the first normal pair of trajectories ``start..``."""
    for i in range(out.shape[0]):
        s = trajectory_state(stream_key, start + i)
        s, a, b = next_normal_pair(s)
        out[i, 0] = a
        out[i, 1] = b


def stream_key(seed: int, *ids: int) -> np.uint64:
    """Derive a 64-bit stream key from a master seed and integer ids."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in ids))
    return np.uint64(ss.generate_state(1, dtype=np.uint64)[0])
