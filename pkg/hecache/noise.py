"""
Decode-error tolerances for decrypted ciphertexts, and the comparison helper
that turns a violated tolerance into a CorrectnessError.

For the reference parameter set the encoding and fresh-encryption tolerances
are frozen from measurement: the worst errors `tools/measure_tolerances.py`
observed, times TOLERANCE_MARGIN. Other parameter sets (the toy rings of the
test suite) fall back to analytic bounds, NOISE_SIGMAS standard deviations of
the slot error plus the worst case of the deterministic rounding terms.
Composite tolerances (sums, products, radix sums) are built from these two.
"""
from __future__ import annotations
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .errors import CorrectnessError, ToleranceReport
from .params import (
    DEFAULT_SIGMA,
    REFERENCE_MODULUS,
    REFERENCE_RING_DEGREE,
    REFERENCE_SCALE,
    SchemeParams,
)

NOISE_SIGMAS = 10.0
TERNARY_VARIANCE = 2.0 / 3.0
TOLERANCE_MARGIN = 2.0


@dataclass(frozen=True)
class MeasuredErrors:
    """
    Worst decode errors observed for one parameter set.

    Attributes:
    * ring_degree, modulus, scale, encryption_sigma -- The parameter set.
    * encode (float) -- Worst slot error of decode(encode(m)).
    * fresh (float) -- Worst slot error of decode(decrypt(encrypt(encode(m)))).
    * trials (int) -- Random vectors per quantity, |m_i| <= 1.
    * keys (int) -- Key pairs the trials were spread over.
    * seed (int) -- Seed of the measurement run.
    """

    ring_degree: int
    modulus: int
    scale: float
    encryption_sigma: float
    encode: float
    fresh: float
    trials: int
    keys: int
    seed: int

    def matches(self, params: SchemeParams) -> bool:
        return (
            params.ring_degree == self.ring_degree
            and params.modulus == self.modulus
            and params.scale == self.scale
            and params.encryption_sigma == self.encryption_sigma
        )


# Maxima over 1000 random vectors spread across 10 key pairs. Re-measure with
#   PYTHONPATH=. python tools/measure_tolerances.py --ring-degree 4096 \
#       --trials 1000 --keys 10 --seed 0
MEASURED_ERRORS = (
    MeasuredErrors(
        ring_degree=REFERENCE_RING_DEGREE,
        modulus=REFERENCE_MODULUS,
        scale=REFERENCE_SCALE,
        encryption_sigma=DEFAULT_SIGMA,
        encode=2.51e-6,
        fresh=3.001e-3,
        trials=1000,
        keys=10,
        seed=0,
    ),
)


def measured_errors(params: SchemeParams) -> Optional[MeasuredErrors]:
    return next((m for m in MEASURED_ERRORS if m.matches(params)), None)


def slot_std(params: SchemeParams, coefficient_std: float) -> float:
    """Std of one decoded slot's real part produced by i.i.d. coefficient noise."""
    return math.sqrt(params.ring_degree / 2) * coefficient_std


def analytic_encoding_bound(params: SchemeParams, scale: Optional[float] = None) -> float:
    """Worst-case slot error from rounding N coefficients by at most 1/2."""
    scale = params.scale if scale is None else scale
    return params.ring_degree / (2 * scale)


def fresh_noise_std(params: SchemeParams) -> float:
    """
    Std of the decoded slot error of a fresh encryption, averaged over keys.
    The decryption noise u*e + e0 + e1*s has per-coefficient variance
    (4/3) N sigma**2 + sigma**2. For a fixed key some slots are noisier than
    this average, which is why measured tolerances replace it where they exist.
    """
    sigma = params.encryption_sigma
    n = params.ring_degree
    coefficient_var = 2 * TERNARY_VARIANCE * n * sigma**2 + sigma**2
    return slot_std(params, math.sqrt(coefficient_var)) / params.scale


def analytic_fresh_bound(params: SchemeParams) -> float:
    return NOISE_SIGMAS * fresh_noise_std(params) + analytic_encoding_bound(params)


def encoding_tolerance(params: SchemeParams, scale: Optional[float] = None) -> float:
    """Slot error of an encode/decode roundtrip at `scale` (default Delta)."""
    measured = measured_errors(params)
    if measured is not None and (scale is None or scale == params.scale):
        return TOLERANCE_MARGIN * measured.encode
    return analytic_encoding_bound(params, scale)


def fresh_tolerance(params: SchemeParams) -> float:
    """Slot error of a fresh encryption of |m_i| <= 1 after decryption."""
    measured = measured_errors(params)
    if measured is not None:
        return TOLERANCE_MARGIN * measured.fresh
    return analytic_fresh_bound(params)


def sum_tolerance(params: SchemeParams, terms: int) -> float:
    """Bound for the sum of `terms` independent fresh encryptions."""
    encode = encoding_tolerance(params)
    noise = fresh_tolerance(params) - encode
    return math.sqrt(terms) * noise + terms * encode


def product_tolerance(
    params: SchemeParams, max_multiplier: float, max_base: float = 1.0
) -> float:
    """
    Bound after one plaintext multiplication of an encryption of the base
    vector b by an encoding of m / b.

    Required Parameters:
    * params (SchemeParams) -- Scheme parameters.
    * max_multiplier (float) -- max |m_i / b_i| of the encoded plaintext.

    Optional Parameters:
    * max_base (float) -- max |b_i| of the encrypted vector.
    """
    return fresh_tolerance(params) * max(max_multiplier, 1.0) + encoding_tolerance(
        params
    ) * max(max_base, 1.0)


def randomization_tolerance(
    params: SchemeParams, sigma: Optional[float] = None, scale: Optional[float] = None
) -> float:
    """Slot perturbation from adding a rounded-gaussian polynomial at `scale`."""
    sigma = params.randomization_sigma if sigma is None else sigma
    scale = params.scale**2 if scale is None else scale
    # Rounding turns N(0, sigma^2) into a variable of variance <= sigma^2 + 1/4.
    return NOISE_SIGMAS * slot_std(params, math.sqrt(sigma**2 + 0.25)) / scale


def radix_tolerance(params: SchemeParams, terms: int, radix: int, frac_bits: int) -> float:
    """Bound for a sum of `terms` cached radix encryptions plus digit truncation."""
    return sum_tolerance(params, terms) + 0.5 * float(radix) ** (-frac_bits)


@dataclass(frozen=True)
class Tolerances:
    """
    The tolerances of one parameter set.

    Attributes:
    * encode (float) -- encode/decode roundtrip.
    * fresh (float) -- Fresh encryption roundtrip.
    * mult (float) -- Cached reconstruction, before randomization.
    * rand (float) -- Randomization perturbation at scale Delta**2.
    * measured (bool) -- Whether encode and fresh come from a measurement.
    """

    encode: float
    fresh: float
    mult: float
    rand: float
    measured: bool

    @classmethod
    def for_params(
        cls,
        params: SchemeParams,
        sigma_rand: Optional[float] = None,
        max_multiplier: float = 1.0,
        max_base: float = 1.0,
    ) -> Tolerances:
        return cls(
            encode=encoding_tolerance(params),
            fresh=fresh_tolerance(params),
            mult=product_tolerance(params, max_multiplier, max_base),
            rand=randomization_tolerance(params, sigma_rand),
            measured=measured_errors(params) is not None,
        )

    @property
    def cached(self) -> float:
        """Full cached encryption: reconstruction plus randomization."""
        return self.mult + self.rand


def max_abs_error(actual: Any, expected: Any) -> tuple[float, int]:
    actual_arr = np.asarray(actual, dtype=np.float64)
    expected_arr = np.asarray(expected, dtype=np.float64)
    if actual_arr.shape != expected_arr.shape:
        raise ValueError(
            f"Shape mismatch: decrypted {actual_arr.shape} vs expected {expected_arr.shape}"
        )
    if actual_arr.size == 0:
        return 0.0, -1
    errors = np.abs(actual_arr - expected_arr)
    index = int(np.argmax(errors))
    return float(errors[index]), index


def check_close(label: str, actual: Any, expected: Any, tolerance: float) -> float:
    """
    Compares a decrypted vector to its expected values.

    Returns:
    * float -- The largest absolute error.

    Raises:
    * CorrectnessError -- If the largest absolute error exceeds `tolerance`.
    """
    error, index = max_abs_error(actual, expected)
    if not error <= tolerance:
        raise CorrectnessError(
            ToleranceReport(
                label,
                error,
                tolerance,
                index,
                float(np.asarray(expected, dtype=np.float64).ravel()[index]),
                float(np.asarray(actual, dtype=np.float64).ravel()[index]),
            )
        )
    return error
