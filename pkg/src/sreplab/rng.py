"""Counter-based random streams.

Every random number in the package is a pure function of a 64-bit stream
key and a counter.  Keys are derived by hashing ``(master_seed, path)``, so a
child stream depends only on its parent and its index, never on the order in
which streams were created or on which worker consumes them.  The block
generator is Philox4x32-10 (Salmon et al., SC'11), implemented here so that it
can be called from inside ``numba`` kernels.

Counter layout used throughout the kernels::

    (c0, c1) = 64-bit draw index, (c2) = sub-draw, (c3) = lane

Lanes separate unrelated uses of one key (e.g. the stationary start of a path
and the path itself).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

__all__ = [
    "Stream",
    "make_stream",
    "split",
    "parse_seed",
    "mix64",
    "root_key",
    "child_key",
    "philox4x32",
    "uniform_pair",
    "std_normal",
]

_M32 = np.uint64(0xFFFFFFFF)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SALT_ROOT = np.uint64(0x5DEECE66D1CE4E5B)
_SALT_CHILD = np.uint64(0xD6E8FEB86659FD93)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)

_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_S21 = np.uint64(21)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * np.pi


@njit(cache=True)
def mix64(z):
    """SplitMix64 finalizer; a bijection on 64-bit words."""
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _MIX_A
    z = (z ^ (z >> _S27)) * _MIX_B
    return z ^ (z >> _S31)


@njit(cache=True)
def root_key(seed):
    return mix64(mix64(np.uint64(seed) ^ _SALT_ROOT) + _GOLDEN)


@njit(cache=True)
def child_key(key, index):
    return mix64(np.uint64(key) ^ mix64(np.uint64(index) * _GOLDEN + _SALT_CHILD))


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all words carried as uint64 holding 32 bits."""
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        n0 = (p1 >> _S32) ^ c1 ^ k0
        n2 = (p0 >> _S32) ^ c3 ^ k1
        c1 = p1 & _M32
        c3 = p0 & _M32
        c0 = n0
        c2 = n2
        k0 = (k0 + _PHILOX_W0) & _M32
        k1 = (k1 + _PHILOX_W1) & _M32
    return c0, c1, c2, c3


@njit(cache=True)
def uniform_pair(key, idx, sub, lane):
    """Two independent uniforms on the open interval (0, 1), 53-bit resolution."""
    key = np.uint64(key)
    idx = np.uint64(idx)
    x0, x1, x2, x3 = philox4x32(
        idx & _M32, idx >> _S32, np.uint64(sub), np.uint64(lane), key & _M32, key >> _S32
    )
    m0 = (x0 << _S21) | (x1 >> _S11)
    m1 = (x2 << _S21) | (x3 >> _S11)
    return (float(m0) + 0.5) * _TWO_M53, (float(m1) + 0.5) * _TWO_M53


@njit(cache=True)
def std_normal(key, idx, sub, lane):
    """One standard normal by Box-Muller from a single Philox block."""
    u0, u1 = uniform_pair(key, idx, sub, lane)
    return np.sqrt(-2.0 * np.log(u0)) * np.cos(_TWO_PI * u1)


@njit(cache=True, parallel=True)
def _uniform_block(key, start, count, lane):
    nblocks = (count + 1) // 2
    out = np.empty(2 * nblocks)
    for i in prange(nblocks):
        a, b = uniform_pair(key, start + i, 0, lane)
        out[2 * i] = a
        out[2 * i + 1] = b
    return out[:count]


@njit(cache=True, parallel=True)
def _normal_block(key, start, count, lane):
    out = np.empty(count)
    for i in prange(count):
        out[i] = std_normal(key, start + i, 0, lane)
    return out


def parse_seed(text: str | int) -> int:
    """Accept a decimal or ``0x``-prefixed hexadecimal seed; reduce modulo 2**64."""
    if isinstance(text, (int, np.integer)):
        value = int(text)
    else:
        value = int(str(text).strip(), 0)
    return value % (1 << 64)


@dataclass(frozen=True)
class Stream:
    """Immutable handle on a counter-based random stream.

    Parameters
    ----------
    master_seed : int
        Experiment seed, reduced modulo 2**64.
    path : tuple of int
        Indices from the root to this stream (root -> replication -> sub-draw).
    """

    master_seed: int
    path: tuple[int, ...] = ()
    key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seed = parse_seed(self.master_seed)
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "path", tuple(int(i) % (1 << 64) for i in self.path))
        k = np.uint64(root_key(np.uint64(seed)))
        for i in self.path:
            k = np.uint64(child_key(k, np.uint64(i)))
        object.__setattr__(self, "key", int(k))

    def split(self, index: int) -> "Stream":
        return Stream(self.master_seed, self.path + (int(index),))

    def uniforms(self, size: int, lane: int = 0, start: int = 0) -> np.ndarray:
        """The first ``size`` uniforms of ``lane`` (counter blocks from ``start``)."""
        return _uniform_block(np.uint64(self.key), np.uint64(start), int(size), np.uint64(lane))

    def normals(self, size: int, lane: int = 0, start: int = 0) -> np.ndarray:
        return _normal_block(np.uint64(self.key), np.uint64(start), int(size), np.uint64(lane))

    def generator(self) -> np.random.Generator:
        """A NumPy generator keyed by this stream, for resampling utilities."""
        return np.random.Generator(np.random.Philox(key=self.key))

    def describe(self) -> dict:
        return {"master_seed": self.master_seed, "path": list(self.path)}


def make_stream(master_seed: int | str) -> Stream:
    return Stream(parse_seed(master_seed))


def split(parent: Stream, index: int) -> Stream:
    return parent.split(index)
