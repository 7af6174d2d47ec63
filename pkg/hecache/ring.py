"""
Exact arithmetic in the quotient ring Z_q[X]/(X^N + 1).

Residues are stored as read-only int64 arrays (q < 2**62). Products of two
residues run in the compiled uint64 kernels of `hecache.kernels`, which never
round or wrap an intermediate.
"""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np

from .errors import DomainError, ParameterError, ParamsMismatchError
from .instrument import record
from .kernels import BarrettModulus, cyclic_ntt, mul_mod_scalar, mul_mod_vec
from .params import SchemeParams


class Domain(Enum):
    """Representation of a ring element."""

    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


@dataclass(frozen=True, eq=False)
class RingElement:
    """
    An immutable degree-N polynomial with residues in [0, q).

    Attributes:
    * params (SchemeParams) -- The ring the element belongs to.
    * coeffs (np.ndarray) -- Length-N int64 residues. For the evaluation domain
    entry k is the value at psi**(2k + 1), psi the primitive 2N-th root of
    unity returned by `negacyclic_root()`.
    * domain (Domain) -- Coefficient or evaluation representation.
    """

    params: SchemeParams
    coeffs: np.ndarray
    domain: Domain = Domain.COEFFICIENT

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=np.int64)
        n = self.params.ring_degree
        if coeffs.shape != (n,):
            raise ParameterError(f"Expecting {n} residues, got shape {coeffs.shape}")
        if coeffs.min() < 0 or coeffs.max() >= self.params.modulus:
            raise ParameterError("Residues must lie in [0, q)")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return (
            self.params.same_ring(other.params)
            and self.domain is other.domain
            and bool(np.array_equal(self.coeffs, other.coeffs))
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        head = ", ".join(str(c) for c in self.coeffs[:4])
        more = ", ..." if self.params.ring_degree > 4 else ""
        return (
            f"{self.__class__.__name__}(N={self.params.ring_degree}, "
            f"domain={self.domain.value}, coeffs=[{head}{more}])"
        )

    def is_zero(self) -> bool:
        return not self.coeffs.any()


@dataclass(frozen=True)
class _NttTables:
    psi: int
    modulus: BarrettModulus
    bitrev: np.ndarray
    psi_powers: np.ndarray
    inv_psi_powers_scaled: np.ndarray
    forward_twiddles: np.ndarray
    inverse_twiddles: np.ndarray


def _primitive_root(order: int, q: int) -> int:
    """Smallest-generator primitive `order`-th root of unity mod q, order a power of two."""
    exponent = (q - 1) // order
    for g in range(2, 10_000):
        candidate = pow(g, exponent, q)
        if pow(candidate, order // 2, q) == q - 1:
            return candidate
    raise ParameterError(f"No primitive {order}-th root of unity found mod {q}")


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _powers(base: int, count: int, q: int, start: int = 1) -> list[int]:
    out = []
    value = start % q
    for _ in range(count):
        out.append(value)
        value = value * base % q
    return out


def _stage_twiddles(omega: int, n: int, q: int) -> np.ndarray:
    # Stage with half-width h occupies [h - 1, 2h - 1).
    flat: list[int] = []
    half = 1
    while half < n:
        flat.extend(_powers(pow(omega, n // (2 * half), q), half, q))
        half *= 2
    return np.array(flat, dtype=np.uint64)


@lru_cache(maxsize=None)
def _ntt_tables(n: int, q: int) -> _NttTables:
    psi = _primitive_root(2 * n, q)
    omega = psi * psi % q
    psi_inv = pow(psi, -1, q)
    n_inv = pow(n, -1, q)
    return _NttTables(
        psi=psi,
        modulus=BarrettModulus.of(q),
        bitrev=_bit_reverse_permutation(n),
        psi_powers=np.array(_powers(psi, n, q), dtype=np.uint64),
        inv_psi_powers_scaled=np.array(_powers(psi_inv, n, q, start=n_inv), dtype=np.uint64),
        forward_twiddles=_stage_twiddles(omega, n, q),
        inverse_twiddles=_stage_twiddles(pow(omega, -1, q), n, q),
    )


def _tables(params: SchemeParams) -> _NttTables:
    return _ntt_tables(params.ring_degree, params.modulus)


def negacyclic_root(params: SchemeParams) -> int:
    """The primitive 2N-th root of unity psi mod q the NTT evaluates at."""
    return _tables(params).psi


def _element(params: SchemeParams, values: np.ndarray, domain: Domain) -> RingElement:
    return RingElement(params, values.astype(np.int64), domain)


def ntt_forward(x: RingElement) -> RingElement:
    """
    Negacyclic number-theoretic transform, coefficient -> evaluation domain.

    Raises:
    * DomainError -- If x is already in the evaluation domain.
    """
    if x.domain is not Domain.COEFFICIENT:
        raise DomainError("ntt_forward expects a coefficient-domain element")
    tables = _tables(x.params)
    constants = tables.modulus.constants
    twisted = mul_mod_vec(x.coeffs.astype(np.uint64), tables.psi_powers, *constants)
    data = twisted[tables.bitrev]
    cyclic_ntt(data, tables.forward_twiddles, *constants)
    record("ntts")
    return _element(x.params, data, Domain.EVALUATION)


def ntt_inverse(x: RingElement) -> RingElement:
    """
    Inverse of `ntt_forward()`, evaluation -> coefficient domain.

    Raises:
    * DomainError -- If x is already in the coefficient domain.
    """
    if x.domain is not Domain.EVALUATION:
        raise DomainError("ntt_inverse expects an evaluation-domain element")
    tables = _tables(x.params)
    constants = tables.modulus.constants
    data = x.coeffs.astype(np.uint64)[tables.bitrev]
    cyclic_ntt(data, tables.inverse_twiddles, *constants)
    out = mul_mod_vec(data, tables.inv_psi_powers_scaled, *constants)
    record("ntts")
    return _element(x.params, out, Domain.COEFFICIENT)


def to_evaluation(x: RingElement) -> RingElement:
    return x if x.domain is Domain.EVALUATION else ntt_forward(x)


def to_coefficient(x: RingElement) -> RingElement:
    return x if x.domain is Domain.COEFFICIENT else ntt_inverse(x)


def to_domain(x: RingElement, domain: Domain) -> RingElement:
    return to_evaluation(x) if domain is Domain.EVALUATION else to_coefficient(x)


def _check_pair(a: RingElement, b: RingElement) -> None:
    if not a.params.same_ring(b.params):
        raise ParamsMismatchError(
            f"Ring mismatch: ({a.params.ring_degree}, {a.params.modulus}) vs "
            f"({b.params.ring_degree}, {b.params.modulus})"
        )
    if a.domain is not b.domain:
        raise DomainError(f"Domain mismatch: {a.domain.value} vs {b.domain.value}")


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    # Both operands < 2**59, the sum cannot overflow int64.
    return RingElement(a.params, (a.coeffs + b.coeffs) % a.params.modulus, a.domain)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    return RingElement(a.params, (a.coeffs - b.coeffs) % a.params.modulus, a.domain)


def ring_neg(a: RingElement) -> RingElement:
    return RingElement(a.params, (-a.coeffs) % a.params.modulus, a.domain)


def ring_scalar_mul(a: RingElement, k: int) -> RingElement:
    modulus = _tables(a.params).modulus
    factor = np.uint64(int(k) % a.params.modulus)
    out = mul_mod_scalar(a.coeffs.astype(np.uint64), factor, *modulus.constants)
    return _element(a.params, out, a.domain)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """
    Negacyclic product of two ring elements, returned in the evaluation domain.
    Coefficient-domain operands are transformed first, and the transforms show
    up in the `ntts` counter.

    Raises:
    * ParamsMismatchError -- If the operands belong to different rings.
    """
    if not a.params.same_ring(b.params):
        raise ParamsMismatchError("ring_mul operands belong to different rings")
    a_eval = to_evaluation(a)
    b_eval = to_evaluation(b)
    out = mul_mod_vec(
        a_eval.coeffs.astype(np.uint64),
        b_eval.coeffs.astype(np.uint64),
        *_tables(a.params).modulus.constants,
    )
    record("ring_muls")
    return _element(a.params, out, Domain.EVALUATION)


def ring_zero(params: SchemeParams, domain: Domain = Domain.COEFFICIENT) -> RingElement:
    return RingElement(params, np.zeros(params.ring_degree, dtype=np.int64), domain)


def ring_monomial(params: SchemeParams, power: int, coefficient: int = 1) -> RingElement:
    """coefficient * X**power, power in [0, N)."""
    if not 0 <= power < params.ring_degree:
        raise ParameterError(f"Monomial power {power} outside [0, {params.ring_degree})")
    coeffs = np.zeros(params.ring_degree, dtype=np.int64)
    coeffs[power] = int(coefficient) % params.modulus
    return RingElement(params, coeffs, Domain.COEFFICIENT)


def ring_from_ints(
    params: SchemeParams, values: Any, domain: Domain = Domain.COEFFICIENT
) -> RingElement:
    """
    Builds an element from arbitrary (possibly negative or huge) integers,
    reducing each modulo q.
    """
    arr = np.asarray(values)
    q = params.modulus
    if arr.dtype.kind == "i":
        residues = np.mod(arr.astype(np.int64), q)
    else:
        residues = np.array([int(v) % q for v in arr.ravel().tolist()], dtype=np.int64)
    return RingElement(params, residues, domain)


def centered(x: RingElement) -> np.ndarray:
    """Residues lifted to the symmetric range (-q/2, q/2]."""
    q = x.params.modulus
    return np.where(x.coeffs > q // 2, x.coeffs - q, x.coeffs)


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Rounds to the nearest integer, ties away from zero."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def sample_uniform(
    params: SchemeParams,
    rng: np.random.Generator,
    domain: Domain = Domain.COEFFICIENT,
) -> RingElement:
    """
    Every residue i.i.d. uniform in [0, q). Uniform is uniform in either
    domain, so the element can be drawn directly where it is needed.
    """
    coeffs = rng.integers(0, params.modulus, size=params.ring_degree, dtype=np.int64)
    record("uniform_samples")
    return RingElement(params, coeffs, domain)


def sample_ternary(params: SchemeParams, rng: np.random.Generator) -> RingElement:
    """Coefficients uniform over {-1, 0, 1}, stored as {q - 1, 0, 1}."""
    coeffs = rng.integers(-1, 2, size=params.ring_degree, dtype=np.int64)
    record("ternary_samples")
    return RingElement(params, coeffs % params.modulus, Domain.COEFFICIENT)


def sample_gaussian_integers(
    rng: np.random.Generator, sigma: float, count: int
) -> np.ndarray:
    """
    Continuous N(0, sigma**2) draws rounded half away from zero, before any
    modular reduction.

    Raises:
    * ParameterError -- If sigma is not positive.
    """
    if not sigma > 0:
        raise ParameterError(f"Gaussian sigma must be positive, not {sigma}")
    draws = rng.normal(0.0, sigma, size=count)
    return round_half_away(draws).astype(np.int64)


def sample_gaussian(
    params: SchemeParams, rng: np.random.Generator, sigma: float
) -> RingElement:
    """Rounded-gaussian coefficients reduced mod q (negative v maps to q - |v|)."""
    ints = sample_gaussian_integers(rng, sigma, params.ring_degree)
    record("gaussian_samples", params.ring_degree)
    return RingElement(params, ints % params.modulus, Domain.COEFFICIENT)
