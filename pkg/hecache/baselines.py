"""
Comparison encryptors: one value per ciphertext, full-slot batch packing, and
radix caching of encrypted powers (scalar values only, slot 0).
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .cache import check_batch_size
from .ckks import (
    Ciphertext,
    PublicKey,
    add_ct_ct,
    encrypt,
    negate_ct,
    zero_ciphertext,
)
from .encoding import encode_fast
from .errors import ParameterError, RangeError
from .instrument import OpCounts, counting, timed
from .params import SchemeParams

logger = logging.getLogger(__name__)

DEFAULT_RADIX = 2
DEFAULT_INT_BITS = 6
DEFAULT_FRAC_BITS = 16
DEFAULT_POOL_SIZE = 16
# Digits beyond a double's mantissa would encode rounding noise, not the value.
MAX_DIGITS = 52


def naive_encrypt(pk: PublicKey, values: Any, rng: np.random.Generator) -> list[Ciphertext]:
    """One encryption per value, the value sits in slot 0."""
    params = pk.params
    return [
        encrypt(pk, encode_fast([value], params), rng)
        for value in np.asarray(values, dtype=np.float64).ravel()
    ]


def batch_encrypt(
    pk: PublicKey, values: Any, batch_size: int, rng: np.random.Generator
) -> list[Ciphertext]:
    """
    Standard encryption of each `batch_size` chunk, last chunk zero-padded.

    Raises:
    * ParameterError -- batch_size outside [1, slot_count].
    """
    params = pk.params
    check_batch_size(batch_size, params)
    flat = np.asarray(values, dtype=np.float64).ravel()
    return [
        encrypt(pk, encode_fast(flat[start : start + batch_size], params), rng)
        for start in range(0, flat.size, batch_size)
    ]


@dataclass(frozen=True, eq=False)
class RadixCache:
    """
    Encrypted powers of a radix plus a pool of encryptions of zero.

    Attributes:
    * radix (int) -- r >= 2.
    * int_bits (int) -- p, highest cached power r**p.
    * frac_bits (int) -- f, lowest cached power r**-f.
    * powers (tuple[Ciphertext, ...]) -- Enc(r**k) for k = -f .. p, in order.
    * zero_pool (tuple[Ciphertext, ...]) -- Fresh encryptions of zero, one is
    added to every scalar to rerandomize it.
    * counts (OpCounts) -- Operations spent building the cache.
    * wall_time (float) -- Seconds spent building the cache.
    """

    radix: int
    int_bits: int
    frac_bits: int
    powers: tuple[Ciphertext, ...]
    zero_pool: tuple[Ciphertext, ...]
    counts: OpCounts
    wall_time: float

    @property
    def size(self) -> int:
        return len(self.powers) + len(self.zero_pool)

    @property
    def params(self) -> SchemeParams:
        return self.powers[0].params

    @property
    def digits(self) -> int:
        return self.int_bits + self.frac_bits + 1

    def power(self, k: int) -> Ciphertext:
        """Enc(radix**k), -frac_bits <= k <= int_bits."""
        return self.powers[k + self.frac_bits]


def rache_precompute(
    pk: PublicKey,
    rng: np.random.Generator,
    radix: int = DEFAULT_RADIX,
    int_bits: int = DEFAULT_INT_BITS,
    frac_bits: int = DEFAULT_FRAC_BITS,
    pool_size: int = DEFAULT_POOL_SIZE,
) -> RadixCache:
    """
    Encrypts every power radix**k, k = -frac_bits .. int_bits, and `pool_size`
    encryptions of zero.

    Raises:
    * ParameterError -- radix < 2, negative bit counts, int_bits + frac_bits
    above 52, an empty pool, or radix**int_bits above the message budget.
    """
    params = pk.params
    if radix < 2:
        raise ParameterError(f"Radix must be at least 2, not {radix}")
    if int_bits < 0 or frac_bits < 0:
        raise ParameterError("Digit counts cannot be negative")
    if int_bits + frac_bits > MAX_DIGITS:
        raise ParameterError(
            f"int_bits + frac_bits = {int_bits + frac_bits} exceeds {MAX_DIGITS}"
        )
    if pool_size < 1:
        raise ParameterError("The zero pool needs at least one ciphertext")
    if float(radix) ** int_bits > params.max_message_magnitude:
        raise ParameterError(
            f"{radix}^{int_bits} exceeds the message budget {params.max_message_magnitude:g}"
        )
    with timed() as watch, counting() as counts:
        powers = tuple(
            encrypt(pk, encode_fast([float(radix) ** k], params), rng)
            for k in range(-frac_bits, int_bits + 1)
        )
        pool = tuple(encrypt(pk, encode_fast([], params), rng) for _ in range(pool_size))
    logger.debug(
        "Precomputed radix cache r=%d p=%d f=%d pool=%d in %.4fs",
        radix,
        int_bits,
        frac_bits,
        pool_size,
        watch.elapsed,
    )
    return RadixCache(radix, int_bits, frac_bits, powers, pool, counts, watch.elapsed)


def radix_digits(cache: RadixCache, value: float) -> list[int]:
    """
    Base-r digits of round(|value| * r**f), least significant first; digit i
    weighs r**(i - f).

    Raises:
    * RangeError -- |value| needs more than int_bits + frac_bits + 1 digits.
    """
    if not math.isfinite(value):
        raise RangeError("Radix encryption needs a finite value")
    n = int(math.floor(abs(value) * float(cache.radix) ** cache.frac_bits + 0.5))
    if n >= cache.radix**cache.digits:
        raise RangeError(
            f"|{value:g}| does not fit into {cache.int_bits} integer and "
            f"{cache.frac_bits} fraction digits of radix {cache.radix}"
        )
    digits = []
    for _ in range(cache.digits):
        n, digit = divmod(n, cache.radix)
        digits.append(digit)
    return digits


def rache_encrypt_scalar(
    cache: RadixCache, value: float, rng: np.random.Generator
) -> Ciphertext:
    """
    Sums the cached powers selected by the digits of |value|, adds one random
    zero-pool ciphertext, and negates for negative values. Uses
    sum(digits) + 1 ciphertext additions and no encryption.
    """
    total = zero_ciphertext(cache.params)
    for position, digit in enumerate(radix_digits(cache, value)):
        term = cache.power(position - cache.frac_bits)
        for _ in range(digit):
            total = add_ct_ct(total, term)
    total = add_ct_ct(total, cache.zero_pool[int(rng.integers(len(cache.zero_pool)))])
    return negate_ct(total) if value < 0 else total


def rache_encrypt(cache: RadixCache, values: Any, rng: np.random.Generator) -> list[Ciphertext]:
    return [
        rache_encrypt_scalar(cache, float(v), rng)
        for v in np.asarray(values, dtype=np.float64).ravel()
    ]
