"""
Compiled mod-q kernels on uint64 residues.

A product of two residues is formed as a 128-bit value from 32-bit limbs and
reduced with Barrett's method, so every intermediate stays in 64-bit integer
registers. The modulus may have at most MAX_MODULUS_BITS bits.

The kernels are serial and release the GIL: client encryptions call them from
several threads at once.
"""
from __future__ import annotations
from dataclasses import dataclass

import numpy as np
from numba import njit

from .params import MAX_MODULUS_BITS


@dataclass(frozen=True)
class BarrettModulus:
    """
    A modulus with its precomputed Barrett constant.

    Attributes:
    * q (np.uint64) -- The modulus.
    * mu (np.uint64) -- floor(2**(2k) / q).
    * k (np.uint64) -- Bit length of q.
    """

    q: np.uint64
    mu: np.uint64
    k: np.uint64

    @classmethod
    def of(cls, modulus: int) -> BarrettModulus:
        """
        Raises:
        * ValueError -- modulus below 2 or wider than MAX_MODULUS_BITS bits.
        """
        k = int(modulus).bit_length()
        if modulus < 2 or k > MAX_MODULUS_BITS:
            raise ValueError(
                f"Modulus must be in [2, 2**{MAX_MODULUS_BITS}), not {modulus}"
            )
        return cls(np.uint64(modulus), np.uint64((1 << (2 * k)) // modulus), np.uint64(k))

    @property
    def constants(self) -> tuple[np.uint64, np.uint64, np.uint64]:
        return self.q, self.mu, self.k


@njit(nogil=True, cache=True)
def mul_wide(a, b):
    """High and low 64-bit words of a * b."""
    mask = np.uint64(0xFFFFFFFF)
    half = np.uint64(32)
    a_lo = a & mask
    a_hi = a >> half
    b_lo = b & mask
    b_hi = b >> half
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    # At most 2**64 - 1, cannot wrap.
    cross = (lo_lo >> half) + (hi_lo & mask) + lo_hi
    hi = a_hi * b_hi + (hi_lo >> half) + (cross >> half)
    lo = (cross << half) | (lo_lo & mask)
    return hi, lo


@njit(nogil=True, cache=True)
def mul_mod(a, b, q, mu, k):
    """a * b mod q for residues a, b < q."""
    one = np.uint64(1)
    x_hi, x_lo = mul_wide(a, b)
    # floor(x / 2**(k-1)) < 2**(k+1)
    q1 = (x_hi << (np.uint64(65) - k)) | (x_lo >> (k - one))
    t_hi, t_lo = mul_wide(q1, mu)
    q3 = (t_hi << (np.uint64(63) - k)) | (t_lo >> (k + one))
    # The true remainder is below 3q, so the low word is exact.
    r = x_lo - q3 * q
    while r >= q:
        r -= q
    return r


@njit(nogil=True, cache=True)
def mul_mod_vec(a, b, q, mu, k):
    out = np.empty_like(a)
    for i in range(a.shape[0]):
        out[i] = mul_mod(a[i], b[i], q, mu, k)
    return out


@njit(nogil=True, cache=True)
def mul_mod_scalar(a, c, q, mu, k):
    out = np.empty_like(a)
    for i in range(a.shape[0]):
        out[i] = mul_mod(a[i], c, q, mu, k)
    return out


@njit(nogil=True, cache=True)
def cyclic_ntt(data, twiddles, q, mu, k):
    """
    In-place iterative radix-2 decimation-in-time transform of a bit-reversed
    input. The twiddles of the stage with half-width h sit at
    twiddles[h - 1 : 2h - 1].
    """
    n = data.shape[0]
    half = 1
    while half < n:
        for start in range(0, n, 2 * half):
            for j in range(half):
                u = data[start + j]
                v = mul_mod(data[start + j + half], twiddles[half - 1 + j], q, mu, k)
                s = u + v
                if s >= q:
                    s -= q
                data[start + j] = s
                if u >= v:
                    data[start + j + half] = u - v
                else:
                    data[start + j + half] = u + (q - v)
        half *= 2
