"""
Slot encoding through the canonical embedding.

A real slot vector of length d = N/2 is mapped to a polynomial of degree < N
whose evaluations at the primitive 2N-th roots zeta**(5**j), j < d, are the
scaled slots. Folding the upper half of the coefficients onto the lower half
(z_i = c_i + 1j * c_{i+d}, using zeta**(d * 5**j) = 1j) turns the evaluation
map into the d x d Vandermonde matrix V[j, i] = (zeta**(5**j))**i.

Two encoders produce the same polynomial:

* `encode_vandermonde()` multiplies by the explicit inverse of V, O(d**2).
* `encode_fast()` reorders the slots and runs one FFT, O(d log d).
"""
from __future__ import annotations
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional

import numpy as np

from .errors import DomainError, ParameterError, RangeError
from .params import SchemeParams, is_power_of_two
from .ring import Domain, RingElement, centered, ring_from_ints, round_half_away


@dataclass(frozen=True)
class Plaintext:
    """
    An encoded slot vector.

    Attributes:
    * poly (RingElement) -- Coefficient-domain polynomial.
    * scale (float) -- Scale the slots were multiplied by (Delta, or Delta**2
    after a plaintext multiplication).
    * slots_used (int) -- Number of leading slots that carry data.
    """

    poly: RingElement
    scale: float
    slots_used: int

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ParameterError(f"Plaintext scale must be positive, not {self.scale}")
        if self.poly.domain is not Domain.COEFFICIENT:
            raise DomainError("Plaintext polynomials live in the coefficient domain")
        if not 0 <= self.slots_used <= self.poly.params.slot_count:
            raise ParameterError(
                f"slots_used {self.slots_used} outside [0, {self.poly.params.slot_count}]"
            )

    @property
    def params(self) -> SchemeParams:
        return self.poly.params


@dataclass(frozen=True, eq=False)
class VandermondeSystem:
    """
    Evaluation matrix of the canonical embedding restricted to d slots.

    Attributes:
    * dimension (int) -- d, the number of slots.
    * omega (complex) -- exp(i*pi / (2d)), a primitive 4d-th (= 2N-th) complex
    root of unity.
    * nodes (np.ndarray) -- The d evaluation points omega**(5**j).
    * matrix (np.ndarray) -- V[j, i] = nodes[j]**i. V @ V.conj().T == d * I.
    """

    dimension: int
    omega: complex
    nodes: np.ndarray
    matrix: np.ndarray


def _node_exponents(d: int) -> np.ndarray:
    exps = np.empty(d, dtype=np.int64)
    value = 1
    for j in range(d):
        exps[j] = value
        value = value * 5 % (4 * d)
    return exps


def build_vandermonde(d: int, params: Optional[SchemeParams] = None) -> VandermondeSystem:
    """
    Builds the d x d embedding matrix.

    Required Parameters:
    * d (int) -- Slot count, a power of two.

    Optional Parameters:
    * params (SchemeParams) -- When given, d may not exceed params.slot_count.

    Raises:
    * ParameterError -- d is not a power of two, or too large.
    """
    if not isinstance(d, int) or not is_power_of_two(d):
        raise ParameterError(f"Vandermonde dimension must be a power of two, not {d}")
    if params is not None and d > params.slot_count:
        raise ParameterError(f"Dimension {d} exceeds the {params.slot_count} available slots")
    order = 4 * d
    roots = np.exp(1j * np.pi * np.arange(order) / (2 * d))
    exps = _node_exponents(d)
    matrix = roots[np.outer(exps, np.arange(d)) % order]
    matrix.flags.writeable = False
    nodes = roots[exps]
    nodes.flags.writeable = False
    return VandermondeSystem(d, complex(roots[1]), nodes, matrix)


@lru_cache(maxsize=8)
def _system_of_dimension(d: int) -> VandermondeSystem:
    return build_vandermonde(d)


def vandermonde_for(params: SchemeParams) -> VandermondeSystem:
    """The full-slot system for `params`, built once per slot count."""
    return _system_of_dimension(params.slot_count)


@lru_cache(maxsize=None)
def _fft_tables(d: int) -> tuple[np.ndarray, np.ndarray]:
    index = (_node_exponents(d) - 1) // 4
    twist = np.exp(1j * np.pi * np.arange(d) / (2 * d))
    return index, twist


def solve_coefficients(
    system: VandermondeSystem, targets: np.ndarray, solve: bool = False
) -> np.ndarray:
    """
    Real coefficient vector (length 2d, not rounded) whose embedding equals
    `targets`.

    By default the inverse is applied as V.conj().T / d. With solve=True the
    system is handed to a dense LU solver instead, O(d**3).
    """
    d = system.dimension
    targets = np.asarray(targets, dtype=np.complex128)
    if targets.shape != (d,):
        raise ParameterError(f"Expecting {d} target values, got shape {targets.shape}")
    if solve:
        try:
            z = np.linalg.solve(system.matrix, targets)
        except np.linalg.LinAlgError as ex:
            raise RuntimeError(f"Embedding matrix of dimension {d} is singular") from ex
    else:
        # V^H t without materializing the conjugate transpose.
        z = np.conj(np.conj(targets) @ system.matrix) / d
    return np.concatenate((z.real, z.imag))


def fft_coefficients(targets: np.ndarray) -> np.ndarray:
    """Same result as `solve_coefficients()` via a single length-d FFT."""
    targets = np.asarray(targets, dtype=np.complex128)
    d = targets.shape[0]
    if not is_power_of_two(d):
        raise ParameterError(f"Slot count must be a power of two, not {d}")
    index, twist = _fft_tables(d)
    spread = np.empty(d, dtype=np.complex128)
    spread[index] = targets
    z = np.fft.fft(spread) / d * np.conj(twist)
    return np.concatenate((z.real, z.imag))


def evaluate_slots(
    coeffs: np.ndarray, system: Optional[VandermondeSystem] = None
) -> np.ndarray:
    """Complex embedding of a real coefficient vector of length 2d."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    d = coeffs.shape[0] // 2
    z = coeffs[:d] + 1j * coeffs[d:]
    if system is not None:
        if system.dimension != d:
            raise ParameterError(
                f"System dimension {system.dimension} does not match {d} slots"
            )
        return system.matrix @ z
    index, twist = _fft_tables(d)
    return (d * np.fft.ifft(z * twist))[index]


def prepare_slots(values: Any, params: SchemeParams) -> tuple[np.ndarray, int]:
    """
    Validates a slot vector and zero-pads it to the full slot count.

    Raises:
    * ParameterError -- More values than slots.
    * RangeError -- Non-finite values or values above max_message_magnitude.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    used = arr.shape[0]
    if used > params.slot_count:
        raise ParameterError(f"{used} values do not fit into {params.slot_count} slots")
    if not np.all(np.isfinite(arr)):
        raise RangeError("Slot values must be finite")
    if used and np.max(np.abs(arr)) > params.max_message_magnitude:
        raise RangeError(
            f"Slot magnitude {np.max(np.abs(arr)):g} exceeds the budget "
            f"{params.max_message_magnitude:g}"
        )
    padded = np.zeros(params.slot_count, dtype=np.float64)
    padded[:used] = arr
    return padded, used


def _to_plaintext(
    coeffs: np.ndarray, params: SchemeParams, scale: float, used: int
) -> Plaintext:
    ints = round_half_away(coeffs).astype(np.int64)
    return Plaintext(ring_from_ints(params, ints), scale, used)


def encode_vandermonde(
    values: Any,
    system: VandermondeSystem,
    params: SchemeParams,
    scale: Optional[float] = None,
) -> Plaintext:
    """
    Encodes through the explicit embedding matrix.

    Required Parameters:
    * values (array-like) -- Up to slot_count real values, zero-padded.
    * system (VandermondeSystem) -- Must span the full slot count of `params`.
    * params (SchemeParams) -- Target ring.

    Optional Parameters:
    * scale (float) -- Defaults to params.scale.

    Raises:
    * ParameterError -- Dimension mismatch or too many values.
    * RangeError -- Non-finite or oversized values.
    """
    if system.dimension != params.slot_count:
        raise ParameterError(
            f"System dimension {system.dimension} != slot count {params.slot_count}"
        )
    scale = params.scale if scale is None else scale
    padded, used = prepare_slots(values, params)
    coeffs = solve_coefficients(system, padded * scale)
    return _to_plaintext(coeffs, params, scale, used)


def encode_fast(values: Any, params: SchemeParams, scale: Optional[float] = None) -> Plaintext:
    """FFT encoder, same contract as `encode_vandermonde()`."""
    scale = params.scale if scale is None else scale
    padded, used = prepare_slots(values, params)
    return _to_plaintext(fft_coefficients(padded * scale), params, scale, used)


encode = encode_fast


def decode(pt: Plaintext, system: Optional[VandermondeSystem] = None) -> np.ndarray:
    """
    Evaluates the plaintext polynomial at the slot nodes and divides by its
    scale. Returns the first `pt.slots_used` real parts.
    """
    if not pt.scale > 0:
        raise ParameterError(f"Plaintext scale must be positive, not {pt.scale}")
    coeffs = centered(pt.poly).astype(np.float64)
    slots = evaluate_slots(coeffs, system)
    return slots.real[: pt.slots_used] / pt.scale
