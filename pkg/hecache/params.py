"""
Scheme parameters for the single-prime CKKS ring Z_q[X]/(X^N + 1).
"""
from __future__ import annotations
import math
from dataclasses import asdict, dataclass, replace
from typing import Any

from .errors import ParameterError

# 2**59 - 25 * 2**16 + 1, prime, q = 1 (mod 2**16) so every N <= 32768 has
# a primitive 2N-th root of unity.
REFERENCE_MODULUS = 576460752301785089
REFERENCE_RING_DEGREE = 4096
REFERENCE_SCALE = float(2**25)
DEFAULT_SIGMA = 3.2
DEFAULT_MAX_MAGNITUDE = 64.0
# Residues and the Barrett constant must fit unsigned 64-bit words.
MAX_MODULUS_BITS = 62

# Deterministic Miller-Rabin witnesses for every n < 3.3 * 10**24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def is_prime(value: int) -> bool:
    """
    Deterministic primality test for the modulus sizes used here (< 2**81).

    >>> is_prime(REFERENCE_MODULUS)
    True
    """
    if value < 2:
        return False
    for p in _MR_BASES:
        if value % p == 0:
            return value == p
    d = value - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, value)
        if x in (1, value - 1):
            continue
        for _ in range(s - 1):
            x = x * x % value
            if x == value - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class SchemeParams:
    """
    An immutable set of CKKS scheme parameters.

    Attributes:
    * ring_degree (int) -- N, the number of polynomial coefficients. A power of
    two, at least 8.
    * modulus (int) -- q, a prime with q = 1 (mod 2N).
    * scale (float) -- The encoding scale factor (Delta), a power of two.
    * encryption_sigma (float) -- Standard deviation of encryption noise.
    * randomization_sigma (float) -- Default standard deviation of the
    randomizing polynomial added after reconstruction.
    * max_message_magnitude (float) -- Largest absolute slot value accepted by
    the encoder. Sized so that scale**2 * max_message_magnitude < q / 2.

    The reference set (N = 4096, 59-bit q, Delta = 2**25, sigma = 3.2) is
    returned by `SchemeParams.reference()`. The modulus bit width and the
    encryption noise deviation are conventions, not derived values.
    """

    ring_degree: int = REFERENCE_RING_DEGREE
    modulus: int = REFERENCE_MODULUS
    scale: float = REFERENCE_SCALE
    encryption_sigma: float = DEFAULT_SIGMA
    randomization_sigma: float = DEFAULT_SIGMA
    max_message_magnitude: float = DEFAULT_MAX_MAGNITUDE

    def __post_init__(self) -> None:
        self.validate()

    def __str__(self) -> str:
        return (
            f"N={self.ring_degree}, q={self.modulus_bits}-bit, "
            f"Delta=2^{self.scale_log2:g}"
        )

    @classmethod
    def reference(cls) -> SchemeParams:
        """The default parameter set used by the benchmarks."""
        return cls()

    @classmethod
    def toy(cls, ring_degree: int, **overrides: Any) -> SchemeParams:
        """
        A reference parameter set with a smaller ring, for tests and quick runs.
        The reference modulus supports every power-of-two degree up to 32768.
        """
        return cls(ring_degree=ring_degree, **overrides)

    def with_ring_degree(self, ring_degree: int) -> SchemeParams:
        return replace(self, ring_degree=ring_degree)

    def validate(self) -> None:
        """
        Raises:
        * ParameterError -- If any of the parameter invariants do not hold.
        """
        n = self.ring_degree
        if not isinstance(n, int) or not is_power_of_two(n) or n < 8:
            raise ParameterError(f"Ring degree must be a power of two >= 8, not {n}")
        q = self.modulus
        if not isinstance(q, int) or not is_prime(q):
            raise ParameterError(f"Modulus {q} is not prime")
        if q.bit_length() > MAX_MODULUS_BITS:
            raise ParameterError(f"Modulus {q} is wider than {MAX_MODULUS_BITS} bits")
        if (q - 1) % (2 * n) != 0:
            raise ParameterError(
                f"Modulus {q} is not 1 mod 2N = {2 * n}, no negacyclic NTT exists"
            )
        if not self.scale > 0 or not math.log2(self.scale).is_integer():
            raise ParameterError(f"Scale must be a positive power of two, not {self.scale}")
        if not self.encryption_sigma > 0:
            raise ParameterError("Encryption sigma must be positive")
        if not self.randomization_sigma > 0:
            raise ParameterError("Randomization sigma must be positive")
        if not self.max_message_magnitude > 0:
            raise ParameterError("Max message magnitude must be positive")
        if self.scale**2 * self.max_message_magnitude >= q / 2:
            raise ParameterError(
                "scale^2 * max_message_magnitude must stay below q/2 so a single "
                "plaintext multiplication still decrypts"
            )

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def modulus_bits(self) -> int:
        return self.modulus.bit_length()

    @property
    def scale_log2(self) -> float:
        return math.log2(self.scale)

    def same_ring(self, other: SchemeParams) -> bool:
        """True when both parameter sets describe the same (N, q) ring."""
        return self.ring_degree == other.ring_degree and self.modulus == other.modulus

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SchemeParams:
        """
        Creates a parameter set from a dictionary such as the one produced by
        `to_dict()`. Unknown keys are rejected.

        Raises:
        * ParameterError -- Unknown keys or invalid values.
        """
        known = {
            "ring_degree",
            "modulus",
            "scale",
            "encryption_sigma",
            "randomization_sigma",
            "max_message_magnitude",
        }
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"Unknown parameter keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in ("ring_degree", "modulus"):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)
