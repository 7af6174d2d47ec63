"""
RLWE key generation, public-key encryption, decryption and the homomorphic
operators used by the caching pipeline.

Ciphertext components are kept in the evaluation domain, so additions and
plaintext multiplications are pointwise. Only decryption returns to the
coefficient domain.
"""
from __future__ import annotations
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .encoding import Plaintext, decode
from .errors import (
    DepthExhaustedError,
    DomainError,
    ParameterError,
    ParamsMismatchError,
    ScaleMismatchError,
)
from .instrument import record
from .params import SchemeParams
from .ring import (
    Domain,
    RingElement,
    centered,
    ntt_forward,
    ntt_inverse,
    ring_add,
    ring_mul,
    ring_neg,
    ring_sub,
    ring_zero,
    sample_gaussian,
    sample_ternary,
    sample_uniform,
    to_evaluation,
)

MAX_DEPTH = 1
# Public-key noise is rejected (and redrawn) beyond this many standard deviations.
PK_NOISE_BOUND_SIGMAS = 10.0


@dataclass(frozen=True, eq=False)
class SecretKey:
    """Ternary secret s, kept in both representations."""

    s: RingElement
    s_eval: RingElement

    @property
    def params(self) -> SchemeParams:
        return self.s.params

    @classmethod
    def from_coefficients(cls, s: RingElement) -> SecretKey:
        if s.domain is not Domain.COEFFICIENT:
            raise DomainError("Secret key polynomial must be in the coefficient domain")
        if np.any(np.abs(centered(s)) > 1):
            raise ParameterError("Secret key coefficients must lie in {-1, 0, 1}")
        return cls(s, ntt_forward(s))


@dataclass(frozen=True, eq=False)
class PublicKey:
    """
    (pk0, pk1) = (-a*s + e, a) in the evaluation domain.
    """

    pk0: RingElement
    pk1: RingElement

    def __post_init__(self) -> None:
        if not self.pk0.params.same_ring(self.pk1.params):
            raise ParamsMismatchError("Public key halves belong to different rings")
        if self.pk0.domain is not Domain.EVALUATION or self.pk1.domain is not Domain.EVALUATION:
            raise DomainError("Public key halves must be in the evaluation domain")

    @property
    def params(self) -> SchemeParams:
        return self.pk0.params


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """
    An RLWE ciphertext.

    Attributes:
    * c0 (RingElement) -- Evaluation domain.
    * c1 (RingElement) -- Evaluation domain.
    * scale (float) -- Delta at depth 0, Delta**2 at depth 1.
    * depth (int) -- Plaintext multiplications applied so far (0 or 1).
    """

    c0: RingElement
    c1: RingElement
    scale: float
    depth: int = 0

    def __post_init__(self) -> None:
        if not self.c0.params.same_ring(self.c1.params):
            raise ParamsMismatchError("Ciphertext components belong to different rings")
        if self.c0.domain is not Domain.EVALUATION or self.c1.domain is not Domain.EVALUATION:
            raise DomainError("Ciphertext components must be in the evaluation domain")
        if self.depth not in range(MAX_DEPTH + 1):
            raise DepthExhaustedError(f"Depth {self.depth} exceeds the supported {MAX_DEPTH}")
        expected = self.c0.params.scale ** (self.depth + 1)
        if self.scale != expected:
            raise ScaleMismatchError(
                f"Depth {self.depth} ciphertext must carry scale {expected:g}, not {self.scale:g}"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (
            self.c0 == other.c0
            and self.c1 == other.c1
            and self.scale == other.scale
            and self.depth == other.depth
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def params(self) -> SchemeParams:
        return self.c0.params


def keygen(params: SchemeParams, rng: np.random.Generator) -> tuple[SecretKey, PublicKey]:
    """
    Generates a ternary secret key and the matching public key. The public-key
    noise is redrawn until every coefficient is within 10 sigma.
    """
    s = sample_ternary(params, rng)
    secret = SecretKey(s, ntt_forward(s))
    a = sample_uniform(params, rng, Domain.EVALUATION)
    bound = PK_NOISE_BOUND_SIGMAS * params.encryption_sigma
    while True:
        e = sample_gaussian(params, rng, params.encryption_sigma)
        if np.max(np.abs(centered(e))) <= bound:
            break
    pk0 = ring_sub(ntt_forward(e), ring_mul(a, secret.s_eval))
    return secret, PublicKey(pk0, a)


def _check_ring(a: SchemeParams, b: SchemeParams) -> None:
    if not a.same_ring(b):
        raise ParamsMismatchError(
            f"Operands belong to different rings ({a}) and ({b})"
        )


def encrypt(pk: PublicKey, pt: Plaintext, rng: np.random.Generator) -> Ciphertext:
    """
    Standard public-key encryption: (u*pk0 + e0 + m, u*pk1 + e1).

    Raises:
    * ScaleMismatchError -- pt is not at the fresh scale Delta.
    * ParamsMismatchError -- pt and pk belong to different rings.
    """
    params = pk.params
    _check_ring(params, pt.params)
    if pt.scale != params.scale:
        raise ScaleMismatchError(f"Expecting plaintext scale {params.scale:g}, not {pt.scale:g}")
    u = ntt_forward(sample_ternary(params, rng))
    e0 = sample_gaussian(params, rng, params.encryption_sigma)
    e1 = sample_gaussian(params, rng, params.encryption_sigma)
    c0 = ring_add(ring_mul(u, pk.pk0), ntt_forward(ring_add(e0, pt.poly)))
    c1 = ring_add(ring_mul(u, pk.pk1), ntt_forward(e1))
    record("encryptions")
    return Ciphertext(c0, c1, params.scale, 0)


def decrypt(sk: SecretKey, ct: Ciphertext) -> Plaintext:
    """c0 + c1*s, carrying the ciphertext scale. Never fails on noise overflow."""
    _check_ring(sk.params, ct.params)
    poly = ntt_inverse(ring_add(ct.c0, ring_mul(ct.c1, sk.s_eval)))
    return Plaintext(poly, ct.scale, ct.params.slot_count)


def decrypt_vector(
    sk: SecretKey,
    cts: Iterable[Ciphertext],
    batch_size: Optional[int] = None,
    length: Optional[int] = None,
) -> np.ndarray:
    """
    Decrypts and decodes a sequence of chunk ciphertexts back into one vector.

    Optional Parameters:
    * batch_size (int) -- Values packed per ciphertext, defaults to all slots.
    * length (int) -- Truncate the result to this many values (drops the
    padding of the last chunk).
    """
    parts = [decode(decrypt(sk, ct))[:batch_size] for ct in cts]
    values = np.concatenate(parts) if parts else np.zeros(0, dtype=np.float64)
    return values if length is None else values[:length]


def zero_ciphertext(params: SchemeParams, depth: int = 0) -> Ciphertext:
    """The trivial (noise-free, non-hiding) encryption of zero."""
    zero = ring_zero(params, Domain.EVALUATION)
    return Ciphertext(zero, zero, params.scale ** (depth + 1), depth)


def _check_compatible(a: Ciphertext, b: Ciphertext) -> None:
    _check_ring(a.params, b.params)
    if a.scale != b.scale or a.depth != b.depth:
        raise ScaleMismatchError(
            f"Cannot combine ciphertexts at (scale {a.scale:g}, depth {a.depth}) "
            f"and (scale {b.scale:g}, depth {b.depth})"
        )


def add_ct_ct(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """
    Raises:
    * ScaleMismatchError -- Different scale or depth.
    * ParamsMismatchError -- Different rings.
    """
    _check_compatible(a, b)
    record("ct_additions")
    return Ciphertext(ring_add(a.c0, b.c0), ring_add(a.c1, b.c1), a.scale, a.depth)


def sub_ct_ct(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_compatible(a, b)
    record("ct_additions")
    return Ciphertext(ring_sub(a.c0, b.c0), ring_sub(a.c1, b.c1), a.scale, a.depth)


def negate_ct(ct: Ciphertext) -> Ciphertext:
    return Ciphertext(ring_neg(ct.c0), ring_neg(ct.c1), ct.scale, ct.depth)


def add_ct_pt(ct: Ciphertext, p: Union[RingElement, Plaintext]) -> Ciphertext:
    """
    Adds a raw polynomial into c0, leaving c1 and the scale untouched. A
    Plaintext is accepted only at the ciphertext's scale.
    """
    if isinstance(p, Plaintext):
        if p.scale != ct.scale:
            raise ScaleMismatchError(f"Plaintext scale {p.scale:g} != ciphertext {ct.scale:g}")
        p = p.poly
    _check_ring(ct.params, p.params)
    return Ciphertext(ring_add(ct.c0, to_evaluation(p)), ct.c1, ct.scale, ct.depth)


def mul_ct_pt(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """
    Multiplies both components by an encoded plaintext. Decodes (at scale
    Delta**2) to the slot-wise product.

    Raises:
    * DepthExhaustedError -- ct was already multiplied once.
    * ScaleMismatchError -- ct or pt not at scale Delta.
    """
    if ct.depth >= MAX_DEPTH:
        raise DepthExhaustedError("Ciphertext has no multiplicative depth left")
    _check_ring(ct.params, pt.params)
    delta = ct.params.scale
    if ct.scale != delta or pt.scale != delta:
        raise ScaleMismatchError(
            f"Plaintext multiplication needs scale {delta:g} on both operands"
        )
    p = ntt_forward(pt.poly)
    return Ciphertext(ring_mul(ct.c0, p), ring_mul(ct.c1, p), ct.scale * pt.scale, ct.depth + 1)
