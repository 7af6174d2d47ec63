"""
Operation counters and wall-clock timers.

Counting is scoped: `with counting() as ops:` collects every counted operation
executed by the current thread (or asyncio task) inside the block. Scopes nest,
an inner scope's operations are also added to every enclosing scope. Nothing is
shared between threads: a worker opens an isolated scope and hands the result
back, and the caller `merge()`s it into its scopes.
"""
from __future__ import annotations
import time
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import asdict, dataclass, fields


@dataclass
class OpCounts:
    """
    Tally of the primitive operations the benchmarks compare.

    Attributes:
    * encryptions (int) -- Public-key encryptions.
    * ring_muls (int) -- Ring multiplications (pointwise products in the
    evaluation domain).
    * ntts (int) -- Forward plus inverse number-theoretic transforms.
    * gaussian_samples (int) -- Rounded-gaussian coefficients drawn.
    * ternary_samples (int) -- Ternary polynomials drawn.
    * uniform_samples (int) -- Uniform polynomials drawn.
    * ct_additions (int) -- Ciphertext additions/subtractions.
    * precomputes (int) -- Cache precomputations.
    """

    encryptions: int = 0
    ring_muls: int = 0
    ntts: int = 0
    gaussian_samples: int = 0
    ternary_samples: int = 0
    uniform_samples: int = 0
    ct_additions: int = 0
    precomputes: int = 0

    def __add__(self, other: OpCounts) -> OpCounts:
        return OpCounts(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )

    def scaled(self, factor: int) -> OpCounts:
        """Counts of `factor` repetitions of the same work."""
        return OpCounts(**{f.name: getattr(self, f.name) * factor for f in fields(self)})

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


_ACTIVE: ContextVar[tuple[OpCounts, ...]] = ContextVar("hecache_counters", default=())


@contextmanager
def counting(isolated: bool = False) -> Iterator[OpCounts]:
    """
    Collects the operations performed inside the block. An isolated scope
    hides the enclosing scopes, whose owner `merge()`s the result later.
    """
    counts = OpCounts()
    outer = () if isolated else _ACTIVE.get()
    token = _ACTIVE.set(outer + (counts,))
    try:
        yield counts
    finally:
        _ACTIVE.reset(token)


def record(name: str, amount: int = 1) -> None:
    """Adds `amount` to counter `name` of every open counting scope."""
    for counts in _ACTIVE.get():
        setattr(counts, name, getattr(counts, name) + amount)


def merge(counts: OpCounts) -> None:
    """Adds every counter of `counts`, collected in another thread, to the open scopes."""
    for name, amount in counts.as_dict().items():
        if amount:
            record(name, amount)


@dataclass
class Stopwatch:
    """Elapsed seconds of a `timed()` block, monotonic clock."""

    elapsed: float = 0.0


@contextmanager
def timed() -> Iterator[Stopwatch]:
    watch = Stopwatch()
    start = time.perf_counter()
    try:
        yield watch
    finally:
        watch.elapsed = time.perf_counter() - start
