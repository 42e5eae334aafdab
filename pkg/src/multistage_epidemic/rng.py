"""Counter-based random streams, one per Monte Carlo replica.

Every replica owns a Philox4x64-10 stream keyed by ``(stream_key, replica)``,
where ``stream_key`` is derived from the master seed and a short tuple naming
the study component (e.g. ``("outbreak", n_index)``). Replicas therefore never
share state, can be generated in any order or on any worker, and a single
replica can be regenerated in isolation from its :class:`ReplicaSeed`.

The generator is implemented in numba so the simulation kernels can draw
without leaving compiled code. Its raw output is bit-identical to
:class:`numpy.random.Philox` with the same key, which the tests check.

State layout (``uint64[11]``): key[2], counter[4], buffer[4], buffer position.
"""
from __future__ import annotations

import math
import secrets
from dataclasses import dataclass, field

import numba
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_TWO_M53 = 1.0 / 9007199254740992.0
STATE_SIZE = 11


@numba.njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


@numba.njit(cache=True)
def _refill(st):
    # increment the 256-bit counter, then encrypt it
    st[2] += _ONE
    if st[2] == _ZERO:
        st[3] += _ONE
        if st[3] == _ZERO:
            st[4] += _ONE
            if st[4] == _ZERO:
                st[5] += _ONE
    c0, c1, c2, c3 = st[2], st[3], st[4], st[5]
    k0, k1 = st[0], st[1]
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    st[6] = c0
    st[7] = c1
    st[8] = c2
    st[9] = c3
    st[10] = _ZERO


@numba.njit(inline="always")
def next_u64(st):
    if st[10] >= np.uint64(4):
        _refill(st)
    out = st[6 + np.int64(st[10])]
    st[10] += _ONE
    return out


@numba.njit(inline="always")
def uniform(st):
    """Uniform double on [0, 1) with 53 random bits (numpy's convention)."""
    return np.float64(next_u64(st) >> _S11) * _TWO_M53


@numba.njit(inline="always")
def exponential(st):
    return -math.log1p(-uniform(st))


@numba.njit(inline="always")
def normal_pair(st):
    """Two independent standard normals (Box-Muller) from two uniforms."""
    r = math.sqrt(-2.0 * math.log1p(-uniform(st)))
    theta = 2.0 * math.pi * uniform(st)
    return r * math.cos(theta), r * math.sin(theta)


@numba.njit(cache=True)
def fill_normal(st, out):
    """Consecutive pairs; an odd tail uses the first member of a final pair."""
    n = out.shape[0]
    for i in range(0, n - 1, 2):
        out[i], out[i + 1] = normal_pair(st)
    if n % 2:
        out[n - 1] = normal_pair(st)[0]


def new_state(key0: int, key1: int) -> np.ndarray:
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    st[0] = np.uint64(key0)
    st[1] = np.uint64(key1)
    st[10] = np.uint64(4)
    return st


def derive_stream_key(master_seed: int, stream: tuple[int, ...] = ()) -> int:
    """64-bit key word for a named stream family under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(s) for s in stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def fresh_master_seed() -> int:
    return secrets.randbits(64)


@dataclass(frozen=True)
class ReplicaSeed:
    """Provenance of one replica's random stream."""

    master_seed: int
    stream: tuple[int, ...] = ()
    replica: int = 0
    stream_key: int = field(default=-1, compare=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.replica < 0:
            raise ValueError("replica index must be nonnegative")
        if self.stream_key < 0:
            object.__setattr__(self, "stream_key", derive_stream_key(self.master_seed, self.stream))

    @property
    def key(self) -> tuple[int, int]:
        return self.stream_key, int(self.replica)

    def state(self) -> np.ndarray:
        return new_state(*self.key)

    def generator(self) -> np.random.Generator:
        """numpy Generator on the same counter-based stream family."""
        return np.random.Generator(np.random.Philox(key=np.array(self.key, dtype=np.uint64)))

    def child(self, replica: int) -> "ReplicaSeed":
        return ReplicaSeed(self.master_seed, self.stream, int(replica), self.stream_key)

    def as_record(self) -> dict:
        return {"master_seed": int(self.master_seed), "stream": list(self.stream), "replica": int(self.replica)}


def as_seed(seed) -> ReplicaSeed:
    """Accept a ReplicaSeed, a plain integer master seed, or None (fresh entropy)."""
    if isinstance(seed, ReplicaSeed):
        return seed
    if seed is None:
        return ReplicaSeed(fresh_master_seed())
    return ReplicaSeed(int(seed))


def replica_keys(seed: ReplicaSeed, start: int, count: int) -> np.ndarray:
    """(count, 2) array of Philox keys for replicas ``start .. start+count-1``."""
    keys = np.empty((count, 2), dtype=np.uint64)
    keys[:, 0] = np.uint64(seed.stream_key)
    keys[:, 1] = np.arange(start, start + count, dtype=np.uint64)
    return keys
