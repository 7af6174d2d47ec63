from __future__ import annotations
from dataclasses import dataclass
from typing import Optional


class HeCacheError(Exception):
    """Base exception for all hecache errors."""


class ParameterError(HeCacheError):
    """Exception raised for invalid scheme parameters, sizes or deviations."""


class DomainError(HeCacheError):
    """Exception raised when a ring element is in the wrong representation."""


class ParamsMismatchError(HeCacheError):
    """Exception raised when operands were built for different rings."""


class ScaleMismatchError(HeCacheError):
    """Exception raised when operand scales or depths do not line up."""


class DepthExhaustedError(HeCacheError):
    """Exception raised for a second plaintext multiplication on a ciphertext."""


class RangeError(HeCacheError):
    """Exception raised for values outside the encodable magnitude budget."""


class CacheConstructionError(HeCacheError):
    """Exception raised when a base slot vector cannot back a cache entry."""


class FormatError(HeCacheError):
    """Exception raised for bad/corrupt/truncated binary files."""


class ConfigError(HeCacheError):
    """Exception raised for invalid benchmark or federated round settings."""


class OutputError(HeCacheError):
    """Exception raised when results cannot be written."""


@dataclass
class ToleranceReport:
    """
    An object that holds information on a decrypted vector that drifted past
    its tolerance.

    Attributes:
    * label (str) -- Which encryptor or operation produced the vector.
    * max_error (float) -- Largest absolute slot error observed.
    * tolerance (float) -- The bound the error was checked against.
    * index (int) -- Position of the largest error.
    * expected (Optional[float]) -- Expected value at that position, if known.
    * actual (Optional[float]) -- Decrypted value at that position, if known.
    """

    label: str
    max_error: float
    tolerance: float
    index: int
    expected: Optional[float] = None
    actual: Optional[float] = None

    def __str__(self) -> str:
        msg = (
            f"{self.label}: max error {self.max_error:.3e} exceeds tolerance "
            f"{self.tolerance:.3e} at index {self.index}."
        )
        if self.expected is not None and self.actual is not None:
            msg = f"{msg} Expected {self.expected!r}, decrypted {self.actual!r}."
        return msg


class CorrectnessError(HeCacheError):
    """Exception raised when a decrypted result falls outside its tolerance."""

    def __init__(self, report: ToleranceReport) -> None:
        super().__init__(str(report))
        self.report = report
