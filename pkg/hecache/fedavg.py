"""
In-process federated averaging over encrypted model weights.

Clients encrypt their weight vectors with one of the four encryptors, the
server adds the ciphertexts chunk by chunk, and the key holder decrypts the
sum. Every round also computes the plaintext mean for comparison.
"""
from __future__ import annotations
import logging
import struct
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .baselines import (
    DEFAULT_FRAC_BITS,
    DEFAULT_INT_BITS,
    DEFAULT_POOL_SIZE,
    DEFAULT_RADIX,
    RadixCache,
    batch_encrypt,
    naive_encrypt,
    rache_encrypt,
    rache_precompute,
)
from .cache import CacheEntry, SelectionPolicy, chunk_and_encrypt, precompute
from .ckks import (
    Ciphertext,
    PublicKey,
    SecretKey,
    add_ct_ct,
    decrypt_vector,
    mul_ct_pt,
)
from .encoding import encode_fast
from .errors import ConfigError, FormatError, OutputError, ParameterError
from .instrument import OpCounts, counting, merge, timed
from .noise import (
    check_close,
    encoding_tolerance,
    fresh_tolerance,
    max_abs_error,
    product_tolerance,
    radix_tolerance,
    randomization_tolerance,
)
from .params import SchemeParams

logger = logging.getLogger(__name__)

MODEL_SIZES = {
    "mnist": 582_026,
    "fashionmnist": 582_026,
    "cifar10": 878_538,
}
DEFAULT_MODEL_SIZE = MODEL_SIZES["mnist"]
DEFAULT_NUM_CLIENTS = 20
DEFAULT_NUM_ROUNDS = 10
DEFAULT_BATCH_SIZE = 2048
# Std of the synthetic per-round local update added to the global model.
DEFAULT_DRIFT = 0.01

WEIGHTS_MAGIC = b"NEMW"
WEIGHTS_VERSION = 1
_WEIGHTS_HEADER = struct.Struct("<4sBQ")

Keys = tuple[SecretKey, PublicKey]


class Encryptor(Enum):
    NAIVE = "naive"
    BATCH = "batch"
    NEMESIS = "nemesis"
    RACHE_PLUS = "rache+"


@dataclass(frozen=True)
class RoundConfig:
    """
    Settings shared by every round of a federated run.

    Attributes:
    * num_clients (int) -- Clients per round, all of them participate.
    * num_rounds (int) -- Communication rounds for `run_fedavg()`.
    * model_size (int) -- Weights per client update.
    * batch_size (int) -- Values per ciphertext for the batch and cached arms.
    * encryptor (Encryptor) -- Which encryptor the clients use.
    * sigma_rand (Optional[float]) -- Randomization deviation of the cached arm,
    None for the parameter set's default.
    * weighted (bool) -- Weight clients by example count instead of uniformly.
    * parallel_clients (int) -- Worker threads for client encryption, 1 runs
    the clients one after another.
    * mean_before_decrypt (bool) -- Multiply the encrypted sum by encode(1/n)
    before decryption. Only possible for arms whose ciphertexts are at depth 0.
    * policy (SelectionPolicy) -- Base vector selection of the cached arm. A
    frequency policy ranks the raw client weights, before any example-count
    weighting.
    * drift (float) -- Std of the synthetic local update in `run_fedavg()`.
    """

    num_clients: int = DEFAULT_NUM_CLIENTS
    num_rounds: int = DEFAULT_NUM_ROUNDS
    model_size: int = DEFAULT_MODEL_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    encryptor: Encryptor = Encryptor.NEMESIS
    sigma_rand: Optional[float] = None
    weighted: bool = False
    parallel_clients: int = 1
    mean_before_decrypt: bool = False
    policy: SelectionPolicy = field(default_factory=SelectionPolicy.all_ones)
    drift: float = DEFAULT_DRIFT

    def __post_init__(self) -> None:
        if not isinstance(self.encryptor, Encryptor):
            try:
                object.__setattr__(self, "encryptor", Encryptor(self.encryptor))
            except ValueError:
                raise ConfigError(f"Unknown encryptor {self.encryptor!r}") from None
        for name in ("num_clients", "num_rounds", "model_size", "batch_size", "parallel_clients"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, not {getattr(self, name)}")
        if self.sigma_rand is not None and not self.sigma_rand > 0:
            raise ConfigError(f"sigma_rand must be positive, not {self.sigma_rand}")
        if self.drift < 0:
            raise ConfigError("drift cannot be negative")

    def validate_for(self, params: SchemeParams) -> None:
        """
        Raises:
        * ConfigError -- batch_size does not fit into the slots of `params`.
        """
        if self.batch_size > params.slot_count:
            raise ConfigError(
                f"Batch size {self.batch_size} exceeds the {params.slot_count} slots of {params}"
            )


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    weights: np.ndarray
    num_examples: int = 1


class ClientEncryptor(ABC):
    """
    Encrypts one client's weight vector. Whatever the encryptor precomputes
    is built once in the constructor and reused for every round.
    """

    kind: Encryptor

    def __init__(self, pk: PublicKey, config: RoundConfig) -> None:
        self.pk = pk
        self.config = config

    @property
    def params(self) -> SchemeParams:
        return self.pk.params

    @property
    def values_per_ciphertext(self) -> int:
        return self.config.batch_size

    @property
    def depth(self) -> int:
        return 0

    @property
    def scale(self) -> float:
        return self.params.scale ** (self.depth + 1)

    @property
    def setup_counts(self) -> OpCounts:
        return OpCounts()

    @property
    def setup_time(self) -> float:
        return 0.0

    @abstractmethod
    def encrypt(self, weights: np.ndarray, rng: np.random.Generator) -> list[Ciphertext]:
        """Encrypts a flat weight vector into chunk ciphertexts."""

    @abstractmethod
    def tolerance(self, max_abs: float) -> float:
        """Decoding error bound for values of magnitude at most `max_abs`."""


class NaiveEncryptor(ClientEncryptor):
    kind = Encryptor.NAIVE

    @property
    def values_per_ciphertext(self) -> int:
        return 1

    def encrypt(self, weights: np.ndarray, rng: np.random.Generator) -> list[Ciphertext]:
        return naive_encrypt(self.pk, weights, rng)

    def tolerance(self, max_abs: float) -> float:
        return fresh_tolerance(self.params)


class BatchEncryptor(ClientEncryptor):
    kind = Encryptor.BATCH

    def encrypt(self, weights: np.ndarray, rng: np.random.Generator) -> list[Ciphertext]:
        return batch_encrypt(self.pk, weights, self.config.batch_size, rng)

    def tolerance(self, max_abs: float) -> float:
        return fresh_tolerance(self.params)


class NemesisEncryptor(ClientEncryptor):
    kind = Encryptor.NEMESIS

    def __init__(
        self,
        pk: PublicKey,
        config: RoundConfig,
        rng: np.random.Generator,
        candidates: Any = None,
        cache: Optional[CacheEntry] = None,
    ) -> None:
        super().__init__(pk, config)
        if cache is None:
            cache = precompute(
                candidates if candidates is not None else [],
                config.policy,
                pk,
                pk.params,
                rng,
            )
        elif not cache.params.same_ring(pk.params):
            raise ConfigError("Cache entry and public key belong to different rings")
        self.cache: CacheEntry = cache

    @property
    def depth(self) -> int:
        return 1

    @property
    def setup_counts(self) -> OpCounts:
        return self.cache.counts

    @property
    def setup_time(self) -> float:
        return self.cache.wall_time

    def encrypt(self, weights: np.ndarray, rng: np.random.Generator) -> list[Ciphertext]:
        return chunk_and_encrypt(
            self.cache, weights, self.config.batch_size, self.config.sigma_rand, rng
        )

    def tolerance(self, max_abs: float) -> float:
        base = np.abs(self.cache.base_slots)
        return product_tolerance(
            self.params, max_abs / float(base.min()), float(base.max())
        ) + randomization_tolerance(self.params, self.config.sigma_rand)


class RachePlusEncryptor(ClientEncryptor):
    kind = Encryptor.RACHE_PLUS

    def __init__(
        self,
        pk: PublicKey,
        config: RoundConfig,
        rng: np.random.Generator,
        radix: int = DEFAULT_RADIX,
        int_bits: int = DEFAULT_INT_BITS,
        frac_bits: int = DEFAULT_FRAC_BITS,
        pool_size: int = DEFAULT_POOL_SIZE,
    ) -> None:
        super().__init__(pk, config)
        self.cache: RadixCache = rache_precompute(
            pk, rng, radix, int_bits, frac_bits, pool_size
        )

    @property
    def values_per_ciphertext(self) -> int:
        return 1

    @property
    def setup_counts(self) -> OpCounts:
        return self.cache.counts

    @property
    def setup_time(self) -> float:
        return self.cache.wall_time

    def encrypt(self, weights: np.ndarray, rng: np.random.Generator) -> list[Ciphertext]:
        return rache_encrypt(self.cache, weights, rng)

    def tolerance(self, max_abs: float) -> float:
        terms = self.cache.digits * (self.cache.radix - 1) + 1
        return radix_tolerance(self.params, terms, self.cache.radix, self.cache.frac_bits)


def make_encryptor(
    kind: Union[Encryptor, str],
    pk: PublicKey,
    config: RoundConfig,
    rng: np.random.Generator,
    candidates: Any = None,
    cache: Optional[CacheEntry] = None,
    **radix_options: int,
) -> ClientEncryptor:
    """
    Builds (and, for the caching arms, precomputes) an encryptor. A given
    `cache` entry is used by the cached arm instead of a fresh precompute.

    Raises:
    * ConfigError -- Unknown encryptor name.
    """
    try:
        kind = Encryptor(kind)
    except ValueError:
        raise ConfigError(f"Unknown encryptor {kind!r}") from None
    if kind is Encryptor.NAIVE:
        return NaiveEncryptor(pk, config)
    if kind is Encryptor.BATCH:
        return BatchEncryptor(pk, config)
    if kind is Encryptor.NEMESIS:
        return NemesisEncryptor(pk, config, rng, candidates, cache)
    return RachePlusEncryptor(pk, config, rng, **radix_options)


@dataclass
class RoundTiming:
    """
    Wall-clock record of one aggregation round.

    Attributes:
    * encrypt_s (float) -- Client encryption time summed over clients.
    * encrypt_wall_s (float) -- Elapsed time of the whole client phase. Equal
    to encrypt_s up to overhead when clients run sequentially.
    * aggregate_s (float) -- Server-side ciphertext additions.
    * decrypt_s (float) -- Decryption and decoding of the sums.
    * ciphertexts_per_client (int) -- Chunks each client uploads.
    * counts (OpCounts) -- Client-side operations summed over clients.
    """

    encrypt_s: float = 0.0
    encrypt_wall_s: float = 0.0
    aggregate_s: float = 0.0
    decrypt_s: float = 0.0
    ciphertexts_per_client: int = 0
    counts: OpCounts = field(default_factory=OpCounts)


@dataclass
class RoundResult:
    """
    Outcome of one aggregation round.

    Attributes:
    * encrypted_sum (list[Ciphertext]) -- Chunk-wise sums of the client
    ciphertexts (scaled by 1/n when the mean is taken before decryption).
    * decrypted_mean (np.ndarray) -- FedAvg result recovered from the sums.
    * plaintext_mean (np.ndarray) -- FedAvg computed on the clear weights.
    * timing (RoundTiming) -- Stage timings and operation counts.
    * tolerance (float) -- Error bound for decrypted_mean.
    """

    encrypted_sum: list[Ciphertext]
    decrypted_mean: np.ndarray
    plaintext_mean: np.ndarray
    timing: RoundTiming
    tolerance: float

    @property
    def max_error(self) -> float:
        return max_abs_error(self.decrypted_mean, self.plaintext_mean)[0]

    def check(self, label: str) -> float:
        """
        Raises:
        * CorrectnessError -- The decrypted mean drifted past `tolerance`.
        """
        return check_close(label, self.decrypted_mean, self.plaintext_mean, self.tolerance)


def _encrypt_client(
    encryptor: ClientEncryptor, weights: np.ndarray, rng: np.random.Generator
) -> tuple[list[Ciphertext], OpCounts, float]:
    with timed() as watch, counting(isolated=True) as counts:
        cts = encryptor.encrypt(weights, rng)
    return cts, counts, watch.elapsed


def aggregate_round(
    config: RoundConfig,
    updates: list[ClientUpdate],
    keys: Keys,
    rng: np.random.Generator,
    encryptors: Optional[list[ClientEncryptor]] = None,
) -> RoundResult:
    """
    Runs one FedAvg round over encrypted updates.

    Required Parameters:
    * config (RoundConfig) -- Round settings.
    * updates (list[ClientUpdate]) -- One update per client, equal lengths.
    * keys (tuple[SecretKey, PublicKey]) -- The aggregation key pair.
    * rng (np.random.Generator) -- Split into one stream per client.

    Optional Parameters:
    * encryptors (list[ClientEncryptor]) -- Per-client encryptors, reused
    across rounds. Built (and precomputed) here when omitted.

    Raises:
    * ConfigError -- Wrong number of updates, unequal lengths, encryptors that
    disagree on depth or scale, or a pre-decryption mean at depth 1.
    """
    sk, pk = keys
    params = pk.params
    config.validate_for(params)
    n = len(updates)
    if n != config.num_clients:
        raise ConfigError(f"Expecting {config.num_clients} client updates, got {n}")
    weights = [np.asarray(u.weights, dtype=np.float64).ravel() for u in updates]
    length = weights[0].size
    if any(w.size != length for w in weights):
        raise ConfigError("All client updates in a round must have the same length")

    if config.weighted:
        examples = np.array([u.num_examples for u in updates], dtype=np.float64)
        if np.any(examples <= 0):
            raise ConfigError("Weighted averaging needs positive example counts")
        factors = examples / examples.sum()
    else:
        factors = np.ones(n, dtype=np.float64)
    submitted = [w * f for w, f in zip(weights, factors)]
    divisor = 1.0 if config.weighted else float(n)
    plaintext_mean = np.sum(submitted, axis=0) / divisor

    client_rngs = rng.spawn(n)
    if encryptors is None:
        encryptors = [
            make_encryptor(config.encryptor, pk, config, setup_rng, candidates=w)
            for setup_rng, w in zip(rng.spawn(n), weights)
        ]
    if len(encryptors) != n:
        raise ConfigError(f"Expecting {n} encryptors, got {len(encryptors)}")
    if len({(e.depth, e.scale) for e in encryptors}) > 1:
        raise ConfigError("Client encryptors disagree on ciphertext depth or scale")
    depth = encryptors[0].depth
    if config.mean_before_decrypt and depth > 0:
        raise ConfigError(
            f"{encryptors[0].kind.value} ciphertexts are at depth {depth}, "
            "the mean cannot be taken before decryption"
        )

    timing = RoundTiming()
    with timed() as phase:
        if config.parallel_clients > 1:
            with ThreadPoolExecutor(max_workers=config.parallel_clients) as pool:
                outcomes = list(pool.map(_encrypt_client, encryptors, submitted, client_rngs))
        else:
            outcomes = [
                _encrypt_client(e, w, r) for e, w, r in zip(encryptors, submitted, client_rngs)
            ]
    timing.encrypt_wall_s = phase.elapsed
    for _, counts, elapsed in outcomes:
        merge(counts)
        timing.counts = timing.counts + counts
        timing.encrypt_s += elapsed
    uploads = [cts for cts, _, _ in outcomes]
    timing.ciphertexts_per_client = len(uploads[0])

    with timed() as watch:
        sums = [reduce(add_ct_ct, chunk) for chunk in zip(*uploads)]
        if config.mean_before_decrypt and not config.weighted:
            inverse = encode_fast(np.full(params.slot_count, 1.0 / n), params)
            sums = [mul_ct_pt(ct, inverse) for ct in sums]
            divisor = 1.0
    timing.aggregate_s = watch.elapsed

    with timed() as watch:
        decrypted = decrypt_vector(sk, sums, encryptors[0].values_per_ciphertext, length)
        decrypted_mean = decrypted / divisor
    timing.decrypt_s = watch.elapsed

    max_abs = max((float(np.max(np.abs(w))) for w in submitted if w.size), default=0.0)
    tolerance = encryptors[0].tolerance(max_abs)
    if config.weighted:
        tolerance *= n
    elif config.mean_before_decrypt:
        tolerance += n * max_abs * encoding_tolerance(params)
    logger.debug(
        "Aggregated %d clients x %d ciphertexts (%s) in %.3fs",
        n,
        timing.ciphertexts_per_client,
        encryptors[0].kind.value,
        timing.encrypt_wall_s + timing.aggregate_s + timing.decrypt_s,
    )
    return RoundResult(sums, decrypted_mean, plaintext_mean, timing, tolerance)


def run_fedavg(
    config: RoundConfig,
    keys: Keys,
    rng: np.random.Generator,
    initial: Any = None,
) -> list[RoundResult]:
    """
    Multi-round FedAvg with synthetic local training: each round every client
    submits the global model plus seeded gaussian drift, and the decrypted
    mean becomes the next global model.
    """
    _, pk = keys
    init_rng, setup_rng, example_rng, round_rng = rng.spawn(4)
    if initial is None:
        global_model = synth_weights(config.model_size, int(init_rng.integers(2**63)))
    else:
        global_model = np.asarray(initial, dtype=np.float64).ravel()
        if global_model.size != config.model_size:
            raise ConfigError(
                f"Initial model has {global_model.size} weights, expecting {config.model_size}"
            )
    examples = example_rng.integers(100, 1000, size=config.num_clients)
    encryptors = [
        make_encryptor(config.encryptor, pk, config, client_rng, candidates=global_model)
        for client_rng in setup_rng.spawn(config.num_clients)
    ]
    results = []
    for index in range(config.num_rounds):
        drift_rngs = round_rng.spawn(config.num_clients)
        updates = [
            ClientUpdate(
                k,
                np.clip(global_model + r.normal(0.0, config.drift, global_model.size), -1.0, 1.0),
                int(examples[k]),
            )
            for k, r in enumerate(drift_rngs)
        ]
        result = aggregate_round(config, updates, keys, round_rng, encryptors)
        global_model = result.decrypted_mean
        logger.info(
            "Round %d/%d: encrypt %.3fs, aggregate %.3fs, max error %.3e",
            index + 1,
            config.num_rounds,
            result.timing.encrypt_s,
            result.timing.aggregate_s,
            result.max_error,
        )
        results.append(result)
    return results


def synth_weights(
    model_size: int, seed: int, distribution: str = "uniform"
) -> np.ndarray:
    """
    Reproducible synthetic model weights in [-1, 1].

    Optional Parameters:
    * distribution (str) -- "uniform" over [-1, 1], or "normal" (std 0.25,
    clipped to [-1, 1]).

    Raises:
    * ParameterError -- model_size < 1 or an unknown distribution.
    """
    if model_size < 1:
        raise ParameterError(f"Model size must be at least 1, not {model_size}")
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size=model_size)
    if distribution == "normal":
        return np.clip(rng.normal(0.0, 0.25, size=model_size), -1.0, 1.0)
    raise ParameterError(f"Unknown weight distribution {distribution!r}")


def save_weights(path: Union[str, Path], weights: Any) -> None:
    """
    Writes a NEMW weight file.

    Raises:
    * OutputError -- The file cannot be written.
    """
    values = np.asarray(weights, dtype=np.float64).ravel()
    header = _WEIGHTS_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, values.size)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(values.astype("<f8").tobytes())
    except OSError as ex:
        raise OutputError(f"Cannot write weight file {path}: {ex}") from None


def load_weights(path: Union[str, Path]) -> np.ndarray:
    """
    Reads a NEMW weight file.

    Raises:
    * FormatError -- Missing file, bad magic or version, truncated or
    oversized payload.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as ex:
        raise FormatError(f"Cannot read weight file {path}: {ex}") from None
    if len(data) < _WEIGHTS_HEADER.size:
        raise FormatError(f"{path} is truncated: {len(data)} bytes, no complete header")
    magic, version, count = _WEIGHTS_HEADER.unpack_from(data)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"{path} is not a weight file (magic {magic!r})")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path} has unsupported version {version}")
    expected = _WEIGHTS_HEADER.size + 8 * count
    if len(data) != expected:
        raise FormatError(
            f"{path} is corrupt: header announces {count} values ({expected} bytes), "
            f"file has {len(data)} bytes"
        )
    return np.frombuffer(data, dtype="<f8", count=count, offset=_WEIGHTS_HEADER.size).astype(
        np.float64
    )
