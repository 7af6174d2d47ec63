"""
Benchmark drivers: arm comparison, per-stage profiles over batch sizes,
precompute sweeps and federated rounds, plus CSV/JSON result emission.

Only the encryption stages are timed. Key generation, weight synthesis,
verification decrypts and result output happen outside the timed regions.
"""
from __future__ import annotations
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from . import serialize
from .baselines import DEFAULT_FRAC_BITS, DEFAULT_INT_BITS, DEFAULT_POOL_SIZE, DEFAULT_RADIX
from .cache import (
    CacheEntry,
    PolicyKind,
    SelectionPolicy,
    chunk_count,
    precompute,
    randomize,
    reconstruct,
)
from .ckks import PublicKey, SecretKey, decrypt_vector, keygen
from .encoding import encode_fast, vandermonde_for
from .errors import ConfigError, FormatError, HeCacheError, OutputError
from .fedavg import (
    DEFAULT_MODEL_SIZE,
    DEFAULT_NUM_CLIENTS,
    DEFAULT_NUM_ROUNDS,
    Encryptor,
    Keys,
    RoundConfig,
    RoundResult,
    make_encryptor,
    synth_weights,
)
from .instrument import OpCounts, counting, timed
from .noise import check_close
from .params import SchemeParams
from .ring import ntt_forward, ring_scalar_mul, ring_zero

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZES = (128, 256, 512, 1024, 2048)
DEFAULT_REPEATS = 3
# Values the scalar arms encrypt before their times are extrapolated.
DEFAULT_NAIVE_SAMPLE = 4096
ALL_ARMS = (Encryptor.NEMESIS, Encryptor.BATCH, Encryptor.RACHE_PLUS, Encryptor.NAIVE)
CSV_COLUMNS = (
    "arm",
    "N",
    "q_bits",
    "delta_log2",
    "batch_size",
    "total_values",
    "repeat",
    "seed",
    "t_precompute_s",
    "t_reconstruct_s",
    "t_randomize_s",
    "t_total_s",
    "n_encrypts",
    "n_ring_muls",
    "n_ntts",
    "n_gaussian_samples",
    "n_ternary_samples",
)
PRECOMPUTE_ARM = "nemesis-precompute"
# Ciphertexts of the first chunk decrypted when verifying a run.
VERIFY_CIPHERTEXTS = 8


@dataclass(frozen=True)
class BenchConfig:
    """
    Settings of a benchmark run.

    Attributes:
    * params (SchemeParams) -- Scheme parameters.
    * model_size (int) -- Number of synthetic weights to encrypt.
    * batch_sizes (tuple[int, ...]) -- Values per ciphertext to sweep.
    * repeats (int) -- Timed repetitions per (arm, batch size).
    * seed (int) -- Base seed for keys, weights and encryption randomness.
    * sigma_rand (Optional[float]) -- Randomization deviation, None for the
    parameter default.
    * policy (SelectionPolicy) -- Base vector selection for the cached arm.
    * arms (tuple[Encryptor, ...]) -- Arms of the comparison.
    * naive_sample (Optional[int]) -- The scalar arms (naive and rache+)
    encrypt only this many values, and their times and counters are scaled up
    linearly to model_size. None encrypts every value.
    * rache_radix, rache_int_bits, rache_frac_bits, rache_pool (int) -- Radix
    cache settings.
    * clients, rounds, parallel_clients (int) -- Federated run settings.
    * weighted (bool) -- Weighted federated mean.
    * verify (bool) -- Decrypt sample ciphertexts and check them against the
    arm's tolerance (CorrectnessError on failure).
    * cache_dir (Optional[str]) -- Directory that persists keys and cache
    entries between runs.
    * distribution (str) -- Synthetic weight distribution.
    """

    params: SchemeParams = field(default_factory=SchemeParams.reference)
    model_size: int = DEFAULT_MODEL_SIZE
    batch_sizes: tuple[int, ...] = (2048,)
    repeats: int = DEFAULT_REPEATS
    seed: int = 0
    sigma_rand: Optional[float] = None
    policy: SelectionPolicy = field(default_factory=SelectionPolicy.all_ones)
    arms: tuple[Encryptor, ...] = ALL_ARMS
    naive_sample: Optional[int] = DEFAULT_NAIVE_SAMPLE
    rache_radix: int = DEFAULT_RADIX
    rache_int_bits: int = DEFAULT_INT_BITS
    rache_frac_bits: int = DEFAULT_FRAC_BITS
    rache_pool: int = DEFAULT_POOL_SIZE
    clients: int = DEFAULT_NUM_CLIENTS
    rounds: int = DEFAULT_NUM_ROUNDS
    parallel_clients: int = 1
    weighted: bool = False
    verify: bool = True
    cache_dir: Optional[str] = None
    distribution: str = "uniform"

    def __post_init__(self) -> None:
        try:
            arms = tuple(Encryptor(a) for a in self.arms)
        except ValueError as ex:
            raise ConfigError(str(ex)) from None
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "batch_sizes", tuple(int(b) for b in self.batch_sizes))
        if not arms:
            raise ConfigError("At least one arm is required")
        if not self.batch_sizes:
            raise ConfigError("At least one batch size is required")
        for batch_size in self.batch_sizes:
            if not 1 <= batch_size <= self.params.slot_count:
                raise ConfigError(
                    f"Batch size {batch_size} outside [1, {self.params.slot_count}]"
                )
        for name in ("model_size", "repeats", "clients", "rounds", "parallel_clients"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, not {getattr(self, name)}")
        if self.naive_sample is not None and self.naive_sample < 1:
            raise ConfigError("naive_sample must be at least 1")
        if self.sigma_rand is not None and not self.sigma_rand > 0:
            raise ConfigError(f"sigma_rand must be positive, not {self.sigma_rand}")
        if self.distribution not in ("uniform", "normal"):
            raise ConfigError(f"Unknown weight distribution {self.distribution!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BenchConfig:
        """
        Builds a config from plain JSON data. `params` is a SchemeParams
        dictionary, `policy` a name and `policy_values` the fixed vector.

        Raises:
        * ConfigError -- Unknown keys or invalid values.
        """
        data = dict(data)
        known = {f.name for f in fields(cls)} | {"policy_values"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        try:
            if "params" in data:
                data["params"] = SchemeParams.from_dict(data["params"])
            values = data.pop("policy_values", None)
            if "policy" in data:
                data["policy"] = SelectionPolicy.from_name(data["policy"], values)
            return cls(**data)
        except (HeCacheError, TypeError, ValueError) as ex:
            if isinstance(ex, ConfigError):
                raise
            raise ConfigError(f"Invalid config: {ex}") from None

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> BenchConfig:
        """
        Raises:
        * ConfigError -- Unreadable file, invalid JSON or invalid settings.
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as ex:
            raise ConfigError(f"Cannot load config {path}: {ex}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["params"] = self.params.to_dict()
        out["arms"] = [a.value for a in self.arms]
        out["batch_sizes"] = list(self.batch_sizes)
        out["policy"] = self.policy.kind.value
        if self.policy.kind is PolicyKind.FIXED:
            out["policy_values"] = list(self.policy.values)
        return out

    def round_config(self, encryptor: Encryptor, batch_size: int, clients: int = 1) -> RoundConfig:
        return RoundConfig(
            num_clients=clients,
            num_rounds=self.rounds,
            model_size=self.model_size,
            batch_size=batch_size,
            encryptor=encryptor,
            sigma_rand=self.sigma_rand,
            weighted=self.weighted,
            parallel_clients=self.parallel_clients,
            policy=self.policy,
        )


@dataclass
class BenchResult:  # pylint: disable=invalid-name
    """
    One timed run of one arm. Field order is the CSV column order.

    Attributes:
    * arm (str) -- naive, batch, nemesis, rache+ or nemesis-precompute.
    * N, q_bits, delta_log2 -- Parameter snapshot.
    * batch_size (int) -- Values per ciphertext (1 for the scalar arms'
    ciphertexts, the sweep value is still recorded).
    * total_values (int) -- Values encrypted.
    * repeat (int) -- Repetition index (round index for federated rows).
    * seed (int) -- Seed of the run.
    * t_precompute_s, t_reconstruct_s, t_randomize_s, t_total_s (float) --
    Stage wall times. For arms without reconstruction, t_reconstruct_s holds
    the encryption time.
    * n_encrypts ... n_ternary_samples (int) -- Operation counts of the
    encryption stage, precompute excluded.
    * n_precompute_encrypts (int) -- Encryptions spent in precompute. Not part
    of the CSV columns.
    """

    arm: str
    N: int
    q_bits: int
    delta_log2: float
    batch_size: int
    total_values: int
    repeat: int
    seed: int
    t_precompute_s: float = 0.0
    t_reconstruct_s: float = 0.0
    t_randomize_s: float = 0.0
    t_total_s: float = 0.0
    n_encrypts: int = 0
    n_ring_muls: int = 0
    n_ntts: int = 0
    n_gaussian_samples: int = 0
    n_ternary_samples: int = 0
    n_precompute_encrypts: int = field(default=0, compare=False)

    def row(self) -> dict[str, Any]:
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    def stage_percentages(self) -> dict[str, float]:
        """Share of each stage in t_total_s, in percent (sums to 100)."""
        total = self.t_precompute_s + self.t_reconstruct_s + self.t_randomize_s
        if total <= 0:
            return {"precompute": 0.0, "reconstruct": 0.0, "randomize": 0.0}
        return {
            "precompute": 100.0 * self.t_precompute_s / total,
            "reconstruct": 100.0 * self.t_reconstruct_s / total,
            "randomize": 100.0 * self.t_randomize_s / total,
        }


@dataclass
class ArmSummary:
    """Median and mean over the repeats of one (arm, batch size)."""

    arm: str
    batch_size: int
    repeats: int
    median_total_s: float
    mean_total_s: float
    median_precompute_s: float
    median_reconstruct_s: float
    median_randomize_s: float
    n_encrypts: int


def warm_up(params: SchemeParams) -> None:
    """Builds the transform tables and compiles the kernels before any timed region."""
    vandermonde_for(params)
    ntt_forward(ring_zero(params))
    ring_scalar_mul(ring_zero(params), 1)
    encode_fast([], params)


def prepare_keys(config: BenchConfig) -> Keys:
    """
    Generates the key pair from the config seed, or loads it from
    `config.cache_dir` when both key files for this ring and seed exist there.
    """
    params = config.params
    if config.cache_dir is None:
        return keygen(params, np.random.default_rng([config.seed, 0]))
    directory = Path(config.cache_dir)
    sk_path = directory / f"key-{params.ring_degree}-seed{config.seed}.nmsk"
    pk_path = directory / f"key-{params.ring_degree}-seed{config.seed}.nmpk"
    if sk_path.exists() and pk_path.exists():
        logger.info("Loading keys from %s", directory)
        sk = serialize.load(sk_path, params)
        pk = serialize.load(pk_path, params)
        if not isinstance(sk, SecretKey) or not isinstance(pk, PublicKey):
            raise FormatError(f"Key files in {directory} hold the wrong objects")
        return sk, pk
    sk, pk = keygen(params, np.random.default_rng([config.seed, 0]))
    directory.mkdir(parents=True, exist_ok=True)
    serialize.save(sk_path, sk)
    serialize.save(pk_path, pk)
    return sk, pk


def key_fingerprint(pk: PublicKey) -> str:
    """First 12 hex digits of the SHA-256 of both public key halves."""
    digest = hashlib.sha256(pk.pk0.coeffs.tobytes())
    digest.update(pk.pk1.coeffs.tobytes())
    return digest.hexdigest()[:12]


def _cache_path(config: BenchConfig, pk: PublicKey) -> Optional[Path]:
    """A cache entry is only valid under the key that encrypted it."""
    if config.cache_dir is None or config.policy.kind is PolicyKind.FREQUENCY:
        return None
    tag = config.policy.kind.value
    if config.policy.kind is PolicyKind.FIXED:
        digest = hashlib.sha256(np.asarray(config.policy.values).tobytes()).hexdigest()
        tag = f"{tag}-{digest[:12]}"
    name = f"nemesis-{config.params.ring_degree}-{key_fingerprint(pk)}-{tag}.nmce"
    return Path(config.cache_dir) / name


def _stored_entry(config: BenchConfig, pk: PublicKey) -> Optional[CacheEntry]:
    path = _cache_path(config, pk)
    if path is None or not path.exists():
        return None
    entry = serialize.load(path, config.params)
    if not isinstance(entry, CacheEntry):
        raise FormatError(f"{path} does not hold a cache entry")
    logger.info("Loaded cache entry from %s", path)
    return entry


def _extrapolate(counts: OpCounts, sample: int, total: int) -> OpCounts:
    return OpCounts(
        **{name: round(value * total / sample) for name, value in counts.as_dict().items()}
    )


def run_arm(
    arm: Encryptor,
    config: BenchConfig,
    keys: Keys,
    weights: np.ndarray,
    batch_size: int,
    repeat: int,
) -> BenchResult:
    """
    Times one arm over the whole weight vector: precompute (cached arms),
    then every chunk. Scalar arms honour `naive_sample`.

    Raises:
    * CorrectnessError -- `config.verify` is set and the first chunk does not
    decrypt within tolerance.
    """
    sk, pk = keys
    params = config.params
    rng = np.random.default_rng([config.seed, repeat, batch_size, ALL_ARMS.index(arm) + 1])
    round_config = config.round_config(arm, batch_size)
    radix_options = {}
    if arm is Encryptor.RACHE_PLUS:
        radix_options = {
            "radix": config.rache_radix,
            "int_bits": config.rache_int_bits,
            "frac_bits": config.rache_frac_bits,
            "pool_size": config.rache_pool,
        }
    stored = _stored_entry(config, pk) if arm is Encryptor.NEMESIS else None
    cache_path = _cache_path(config, pk)
    encryptor = make_encryptor(
        arm, pk, round_config, rng, candidates=weights, cache=stored, **radix_options
    )
    if arm is Encryptor.NEMESIS and stored is None and cache_path is not None:
        serialize.save(cache_path, encryptor.cache)  # type: ignore[attr-defined]

    total = weights.size
    measured = total
    if arm in (Encryptor.NAIVE, Encryptor.RACHE_PLUS) and config.naive_sample is not None:
        measured = min(total, config.naive_sample)
        if measured < total:
            logger.warning(
                "%s arm: timing %d of %d values and extrapolating linearly",
                arm.value,
                measured,
                total,
            )
    values = weights[:measured]

    reconstruct_s = randomize_s = 0.0
    first_chunk: list = []
    with counting() as counts:
        for start in range(0, measured, batch_size):
            chunk = values[start : start + batch_size]
            if arm is Encryptor.NEMESIS:
                cache = encryptor.cache  # type: ignore[attr-defined]
                with timed() as watch:
                    ct = reconstruct(cache, chunk)
                reconstruct_s += watch.elapsed
                with timed() as watch:
                    ct = randomize(ct, config.sigma_rand, rng)
                randomize_s += watch.elapsed
                cts = [ct]
            else:
                with timed() as watch:
                    cts = encryptor.encrypt(chunk, rng)
                reconstruct_s += watch.elapsed
            if start == 0:
                first_chunk = cts

    if measured < total:
        factor = total / measured
        reconstruct_s *= factor
        randomize_s *= factor
        counts = _extrapolate(counts, measured, total)

    if config.verify and measured:
        sample = first_chunk[:VERIFY_CIPHERTEXTS]
        count = min(batch_size, len(sample) * encryptor.values_per_ciphertext, measured)
        expected = values[:count]
        decrypted = decrypt_vector(sk, sample, encryptor.values_per_ciphertext, count)
        check_close(
            f"{arm.value} (N={params.ring_degree}, batch {batch_size})",
            decrypted,
            expected,
            encryptor.tolerance(float(np.max(np.abs(weights)))),
        )

    setup_s = encryptor.setup_time
    return BenchResult(
        arm=arm.value,
        N=params.ring_degree,
        q_bits=params.modulus_bits,
        delta_log2=params.scale_log2,
        batch_size=batch_size,
        total_values=total,
        repeat=repeat,
        seed=config.seed,
        t_precompute_s=setup_s,
        t_reconstruct_s=reconstruct_s,
        t_randomize_s=randomize_s,
        t_total_s=setup_s + reconstruct_s + randomize_s,
        n_encrypts=counts.encryptions,
        n_ring_muls=counts.ring_muls,
        n_ntts=counts.ntts,
        n_gaussian_samples=counts.gaussian_samples,
        n_ternary_samples=counts.ternary_samples,
        n_precompute_encrypts=encryptor.setup_counts.encryptions,
    )


def run_arm_comparison(config: BenchConfig, keys: Optional[Keys] = None) -> list[BenchResult]:
    """
    Times every configured arm over the same synthetic weight vector, for
    every batch size and repeat.
    """
    keys = keys or prepare_keys(config)
    weights = synth_weights(config.model_size, config.seed, config.distribution)
    warm_up(config.params)
    results = []
    for batch_size in config.batch_sizes:
        logger.info(
            "Comparing %s on %d values, batch %d (%d ciphertexts per packed arm)",
            ", ".join(a.value for a in config.arms),
            config.model_size,
            batch_size,
            chunk_count(config.model_size, batch_size),
        )
        for repeat in range(config.repeats):
            for arm in config.arms:
                results.append(run_arm(arm, config, keys, weights, batch_size, repeat))
    return results


def run_stage_profile(config: BenchConfig, keys: Optional[Keys] = None) -> list[BenchResult]:
    """Cached arm only, per-stage times for every batch size and repeat."""
    return run_arm_comparison(replace(config, arms=(Encryptor.NEMESIS,)), keys)


def run_precompute_sweep(
    config: BenchConfig,
    keys: Optional[Keys] = None,
    base_sizes: Optional[tuple[int, ...]] = None,
) -> list[BenchResult]:
    """
    Times precompute alone for base vectors of every size in `base_sizes`
    (default: 1 followed by the configured batch sizes).
    """
    _, pk = keys or prepare_keys(config)
    params = config.params
    sizes = base_sizes or (1,) + tuple(b for b in config.batch_sizes if b != 1)
    weights = synth_weights(config.model_size, config.seed, config.distribution)
    warm_up(params)
    results = []
    for size in sizes:
        for repeat in range(config.repeats):
            rng = np.random.default_rng([config.seed, repeat, size, 0])
            entry = precompute(weights, config.policy, pk, params, rng, base_size=size)
            counts = entry.counts
            results.append(
                BenchResult(
                    arm=PRECOMPUTE_ARM,
                    N=params.ring_degree,
                    q_bits=params.modulus_bits,
                    delta_log2=params.scale_log2,
                    batch_size=size,
                    total_values=size,
                    repeat=repeat,
                    seed=config.seed,
                    t_precompute_s=entry.wall_time,
                    t_total_s=entry.wall_time,
                    n_encrypts=counts.encryptions,
                    n_ring_muls=counts.ring_muls,
                    n_ntts=counts.ntts,
                    n_gaussian_samples=counts.gaussian_samples,
                    n_ternary_samples=counts.ternary_samples,
                    n_precompute_encrypts=counts.encryptions,
                )
            )
    return results


def fedavg_results(
    config: BenchConfig, encryptor: Encryptor, batch_size: int, rounds: list[RoundResult]
) -> list[BenchResult]:
    """One row per federated round; t_reconstruct_s holds client encryption time."""
    params = config.params
    rows = []
    for index, result in enumerate(rounds):
        timing = result.timing
        counts = timing.counts
        total = timing.encrypt_s + timing.aggregate_s + timing.decrypt_s
        rows.append(
            BenchResult(
                arm=f"fedavg-{encryptor.value}",
                N=params.ring_degree,
                q_bits=params.modulus_bits,
                delta_log2=params.scale_log2,
                batch_size=batch_size,
                total_values=config.model_size * config.clients,
                repeat=index,
                seed=config.seed,
                t_reconstruct_s=timing.encrypt_s,
                t_total_s=total,
                n_encrypts=counts.encryptions,
                n_ring_muls=counts.ring_muls,
                n_ntts=counts.ntts,
                n_gaussian_samples=counts.gaussian_samples,
                n_ternary_samples=counts.ternary_samples,
            )
        )
    return rows


def summarize(results: list[BenchResult]) -> list[ArmSummary]:
    """Groups by (arm, batch size) in first-seen order."""
    groups: dict[tuple[str, int], list[BenchResult]] = {}
    for result in results:
        groups.setdefault((result.arm, result.batch_size), []).append(result)
    summaries = []
    for (arm, batch_size), group in groups.items():
        totals = np.array([r.t_total_s for r in group])
        summaries.append(
            ArmSummary(
                arm=arm,
                batch_size=batch_size,
                repeats=len(group),
                median_total_s=float(np.median(totals)),
                mean_total_s=float(np.mean(totals)),
                median_precompute_s=float(np.median([r.t_precompute_s for r in group])),
                median_reconstruct_s=float(np.median([r.t_reconstruct_s for r in group])),
                median_randomize_s=float(np.median([r.t_randomize_s for r in group])),
                n_encrypts=group[0].n_encrypts,
            )
        )
    return summaries


def _csv_text(results: list[BenchResult]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for result in results:
        writer.writerow(result.row())
    return buffer.getvalue()


def _json_text(results: list[BenchResult]) -> str:
    document = {"columns": list(CSV_COLUMNS), "results": [r.row() for r in results]}
    return json.dumps(document, indent=2) + "\n"


def emit_results(
    results: list[BenchResult], fmt: str = "csv", path: Optional[Union[str, Path]] = None
) -> str:
    """
    Renders results as CSV or JSON, writes them to `path` when given, and
    returns the rendered text.

    Raises:
    * ConfigError -- Unknown format.
    * OutputError -- The path cannot be written.
    """
    if fmt == "csv":
        text = _csv_text(results)
    elif fmt == "json":
        text = _json_text(results)
    else:
        raise ConfigError(f"Unknown output format {fmt!r}, expecting csv or json")
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as ex:
            raise OutputError(f"Cannot write results to {path}: {ex}") from None
        logger.info("Wrote %d results to %s", len(results), path)
    return text


_COLUMN_TYPES = {
    f.name: {"str": str, "int": int, "float": float}[str(f.type)]
    for f in fields(BenchResult)
    if f.name in CSV_COLUMNS
}


def parse_results_csv(text: str) -> list[BenchResult]:
    """
    Parses CSV produced by `emit_results()` back into results.

    Raises:
    * FormatError -- Missing columns or unparsable values.
    """
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise FormatError(f"Unexpected CSV columns: {reader.fieldnames}")
    results = []
    for line, row in enumerate(reader, start=2):
        try:
            values = {name: _COLUMN_TYPES[name](row[name]) for name in CSV_COLUMNS}
        except (TypeError, ValueError) as ex:
            raise FormatError(f"Line {line}: {ex}") from None
        results.append(BenchResult(**values))
    return results


def read_results_csv(path: Union[str, Path]) -> list[BenchResult]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as ex:
        raise FormatError(f"Cannot read {path}: {ex}") from None
    return parse_results_csv(text)

