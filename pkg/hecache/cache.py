"""
Cached batch encryption: precompute one base ciphertext, then produce every
further ciphertext by plaintext multiplication (reconstruction) and a
rounded-gaussian perturbation (randomization).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np

from .ckks import Ciphertext, PublicKey, add_ct_pt, encrypt, mul_ct_pt
from .encoding import Plaintext, encode_fast, encode_vandermonde, vandermonde_for
from .errors import CacheConstructionError, ParameterError, ParamsMismatchError, RangeError
from .instrument import OpCounts, counting, record, timed
from .params import SchemeParams
from .ring import sample_gaussian

logger = logging.getLogger(__name__)


class PolicyKind(Enum):
    ALL_ONES = "all-ones"
    FIXED = "fixed"
    FREQUENCY = "freq"


@dataclass(frozen=True)
class SelectionPolicy:
    """
    Chooses the base slot vector of a cache entry.

    Attributes:
    * kind (PolicyKind) -- all-ones, a fixed vector, or the most frequent
    candidate values.
    * values (tuple[float, ...]) -- The vector for FIXED, tiled to the base size.
    * top_k (Optional[int]) -- For FREQUENCY, how many distinct values to keep
    before cycling them over the base size. Defaults to all of them.
    * decimals (int) -- For FREQUENCY, candidates are rounded to this many
    decimals before counting, so real-valued weights fall into histogram bins.
    """

    kind: PolicyKind = PolicyKind.ALL_ONES
    values: tuple[float, ...] = ()
    top_k: Optional[int] = None
    decimals: int = 1

    @classmethod
    def all_ones(cls) -> SelectionPolicy:
        return cls(PolicyKind.ALL_ONES)

    @classmethod
    def fixed(cls, values: Any) -> SelectionPolicy:
        return cls(PolicyKind.FIXED, tuple(float(v) for v in np.asarray(values).ravel()))

    @classmethod
    def frequency(cls, top_k: Optional[int] = None, decimals: int = 1) -> SelectionPolicy:
        return cls(PolicyKind.FREQUENCY, top_k=top_k, decimals=decimals)

    @classmethod
    def from_name(cls, name: str, values: Any = None) -> SelectionPolicy:
        """
        Builds a policy from its command-line name (all-ones, fixed, freq).

        Raises:
        * ParameterError -- Unknown name, or `fixed` without values.
        """
        try:
            kind = PolicyKind(name)
        except ValueError:
            raise ParameterError(f"Unknown selection policy {name!r}") from None
        if kind is PolicyKind.FIXED:
            if values is None:
                raise ParameterError("The fixed policy needs a value list")
            return cls.fixed(values)
        return cls(kind)

    def select(self, candidates: Any, d: int) -> np.ndarray:
        """
        Produces d base values. The result may contain zeros (a fixed vector
        with a 0), which `precompute()` rejects.
        """
        if self.kind is PolicyKind.ALL_ONES:
            return np.ones(d, dtype=np.float64)
        if self.kind is PolicyKind.FIXED:
            if not self.values:
                raise ParameterError("Fixed selection policy has no values")
            return np.resize(np.asarray(self.values, dtype=np.float64), d)
        pool = np.round(np.asarray(candidates, dtype=np.float64).ravel(), self.decimals)
        pool = pool[np.isfinite(pool) & (pool != 0)]
        if pool.size == 0:
            raise CacheConstructionError("No nonzero candidate values to select from")
        uniq, freq = np.unique(pool, return_counts=True)
        # Most frequent first, ties broken by value.
        ranked = uniq[np.lexsort((uniq, -freq))]
        return np.resize(ranked[: self.top_k], d)


@dataclass(frozen=True, eq=False)
class CacheEntry:
    """
    A precomputed base encryption.

    Attributes:
    * base_slots (np.ndarray) -- The base vector b tiled over every slot.
    * base_size (int) -- Number of values the policy selected before tiling.
    * base_plaintext (Plaintext) -- Encoding of base_slots.
    * base_ciphertext (Ciphertext) -- Encryption of base_plaintext (depth 0).
    * counts (OpCounts) -- Operations spent building the entry.
    * wall_time (float) -- Seconds spent building the entry.
    """

    base_slots: np.ndarray
    base_size: int
    base_plaintext: Plaintext
    base_ciphertext: Ciphertext
    counts: OpCounts
    wall_time: float

    @property
    def params(self) -> SchemeParams:
        return self.base_ciphertext.params


def tile_base(base: np.ndarray, params: SchemeParams) -> np.ndarray:
    """
    Raises:
    * ParameterError -- More base values than slots.
    * CacheConstructionError -- A zero, a non-finite value or a value above
    max_message_magnitude in the base vector.
    """
    base = np.asarray(base, dtype=np.float64).ravel()
    if base.size == 0 or base.size > params.slot_count:
        raise ParameterError(
            f"Base vector needs between 1 and {params.slot_count} values, got {base.size}"
        )
    if np.any(base == 0):
        raise CacheConstructionError(
            f"Base slot {int(np.argmin(np.abs(base)))} is zero, reconstruction would divide by it"
        )
    if not np.all(np.isfinite(base)) or np.max(np.abs(base)) > params.max_message_magnitude:
        raise CacheConstructionError(
            f"Base values must be finite and at most {params.max_message_magnitude:g} in "
            "magnitude"
        )
    slots = np.resize(base, params.slot_count)
    slots.flags.writeable = False
    return slots


def precompute(
    candidates: Any,
    policy: SelectionPolicy,
    pk: PublicKey,
    params: SchemeParams,
    rng: np.random.Generator,
    base_size: Optional[int] = None,
) -> CacheEntry:
    """
    Selects the base vector, encodes it through the Vandermonde system and
    encrypts it once.

    Required Parameters:
    * candidates (array-like) -- Plaintext candidates the policy may draw from.
    * policy (SelectionPolicy) -- Base vector selection.
    * pk (PublicKey) -- Encryption key.
    * params (SchemeParams) -- Must describe the same ring as pk.
    * rng (np.random.Generator) -- Encryption randomness.

    Optional Parameters:
    * base_size (int) -- Values selected before tiling, defaults to slot_count.

    Raises:
    * CacheConstructionError -- The selected vector contains a zero.
    * ParamsMismatchError -- params and pk disagree on the ring.
    """
    if not params.same_ring(pk.params):
        raise ParamsMismatchError("Cache parameters and public key belong to different rings")
    d = params.slot_count if base_size is None else base_size
    with timed() as watch, counting() as counts:
        record("precomputes")
        slots = tile_base(policy.select(candidates, d), params)
        plaintext = encode_vandermonde(slots, vandermonde_for(params), params)
        ciphertext = encrypt(pk, plaintext, rng)
    logger.debug(
        "Precomputed %s cache entry, %d base values, %.4fs",
        policy.kind.value,
        d,
        watch.elapsed,
    )
    return CacheEntry(slots, d, plaintext, ciphertext, counts, watch.elapsed)


def reconstruct(cache: CacheEntry, m: Any) -> Ciphertext:
    """
    Builds an encryption of m from the cached base: encodes m / b slot-wise
    and multiplies the base ciphertext by it. No public-key operation and no
    encryption noise is involved.

    Raises:
    * RangeError -- A value m_i or a scaled value m_i / b_i is non-finite or
    outside the encoding budget.
    * ParameterError -- More values than slots.
    """
    params = cache.params
    values = np.asarray(m, dtype=np.float64).ravel()
    if values.size > params.slot_count:
        raise ParameterError(f"{values.size} values do not fit into {params.slot_count} slots")
    if values.size and not np.all(np.isfinite(values)):
        raise RangeError("Slot values must be finite")
    # b * (m / b) decrypts at scale Delta**2, so m itself must respect the budget.
    if values.size and np.max(np.abs(values)) > params.max_message_magnitude:
        worst = int(np.argmax(np.abs(values)))
        raise RangeError(
            f"Value m[{worst}] = {values[worst]:g} exceeds the budget "
            f"{params.max_message_magnitude:g}"
        )
    scaled = values / cache.base_slots[: values.size]
    if values.size and np.max(np.abs(scaled)) > params.max_message_magnitude:
        worst = int(np.argmax(np.abs(scaled)))
        raise RangeError(
            f"Scaled value m[{worst}]/b[{worst}] = {scaled[worst]:g} exceeds the budget "
            f"{params.max_message_magnitude:g}"
        )
    return mul_ct_pt(cache.base_ciphertext, encode_fast(scaled, params))


def randomize(
    ct: Ciphertext, sigma: Optional[float], rng: np.random.Generator
) -> Ciphertext:
    """
    Adds a rounded-gaussian polynomial to c0. sigma=None uses the parameter
    set's randomization_sigma.

    Raises:
    * ParameterError -- sigma is not positive.
    """
    sigma = ct.params.randomization_sigma if sigma is None else sigma
    if not sigma > 0:
        raise ParameterError(f"Randomization sigma must be positive, not {sigma}")
    return add_ct_pt(ct, sample_gaussian(ct.params, rng, sigma))


def nemesis_encrypt(
    cache: CacheEntry, m: Any, sigma: Optional[float], rng: np.random.Generator
) -> Ciphertext:
    """Batch encryption through the cache: reconstruct, then randomize."""
    return randomize(reconstruct(cache, m), sigma, rng)


def chunk_count(total: int, batch_size: int) -> int:
    return -(-total // batch_size)


def check_batch_size(batch_size: int, params: SchemeParams) -> None:
    if not isinstance(batch_size, (int, np.integer)) or not 1 <= batch_size <= params.slot_count:
        raise ParameterError(
            f"Batch size must be between 1 and {params.slot_count}, not {batch_size}"
        )


def chunk_and_encrypt(
    cache: CacheEntry,
    weights: Any,
    batch_size: int,
    sigma: Optional[float],
    rng: np.random.Generator,
) -> list[Ciphertext]:
    """
    Splits a long vector into batches of `batch_size` and encrypts each with
    `nemesis_encrypt()`. The last batch is zero-padded.

    Raises:
    * ParameterError -- batch_size outside [1, slot_count].
    """
    check_batch_size(batch_size, cache.params)
    values = np.asarray(weights, dtype=np.float64).ravel()
    logger.debug(
        "Encrypting %d values in %d batches of %d",
        values.size,
        chunk_count(values.size, batch_size),
        batch_size,
    )
    return [
        nemesis_encrypt(cache, values[start : start + batch_size], sigma, rng)
        for start in range(0, values.size, batch_size)
    ]
