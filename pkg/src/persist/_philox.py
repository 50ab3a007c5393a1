"""Philox4x32-10 counter-based generator, compiled with numba.

All arithmetic is done in int64 with explicit 32-bit masks; the wrapping
64-bit product keeps the correct low/high words.
"""

import numba as nb
import numpy as np

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = 0xFFFFFFFF

_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = c0 * _M0
        p1 = c2 * _M1
        hi0 = (p0 >> 32) & _MASK
        lo0 = p0 & _MASK
        hi1 = (p1 >> 32) & _MASK
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def block_bits(key0, key1, trial, block):
    """Two 53-bit integers for counter block ``block`` of trial ``trial``."""
    r0, r1, r2, r3 = philox4x32(
        block & _MASK, (block >> 32) & _MASK, trial & _MASK, (trial >> 32) & _MASK, key0, key1
    )
    a = ((r0 >> 5) << 26) | (r1 >> 6)
    b = ((r2 >> 5) << 26) | (r3 >> 6)
    return a, b


@nb.njit(cache=True, inline="always")
def to_unit(bits):
    """Map a 53-bit integer to (0, 1]."""
    return (bits + 1) * _TWO_M53


def split_seed(seed: int) -> tuple[int, int]:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & _MASK, seed >> 32


def philox_reference(counter, key):
    """Pure-Python Philox4x32-10, for test vectors and cross-checks."""
    c = list(counter)
    k = list(key)
    for _ in range(10):
        p0 = c[0] * _M0
        p1 = c[2] * _M1
        c = [(p1 >> 32) ^ c[1] ^ k[0], p1 & _MASK, (p0 >> 32) ^ c[3] ^ k[1], p0 & _MASK]
        k = [(k[0] + _W0) & _MASK, (k[1] + _W1) & _MASK]
    return tuple(c)


def philox_block(counter, key) -> np.ndarray:
    r = philox4x32(*(np.int64(x) for x in counter), *(np.int64(x) for x in key))
    return np.array(r, dtype=np.int64)
