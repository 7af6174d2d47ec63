"""
Command-line entry point: `python -m hecache {compare,profile,fedavg,roundtrip}`.

Exit codes: 0 success, 1 other failures (I/O, corrupt files), 2 invalid
configuration, parameters or base vector, 3 a decrypted result outside its
tolerance.
"""
from __future__ import annotations
import argparse
import logging
import sys
from dataclasses import replace
from typing import Any, Callable, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .bench import (
    ALL_ARMS,
    DEFAULT_BATCH_SIZES,
    BenchConfig,
    BenchResult,
    emit_results,
    fedavg_results,
    prepare_keys,
    run_arm_comparison,
    run_precompute_sweep,
    run_stage_profile,
    summarize,
)
from .cache import PolicyKind, SelectionPolicy
from .ckks import decrypt_vector
from .errors import (
    CacheConstructionError,
    ConfigError,
    CorrectnessError,
    HeCacheError,
    ParameterError,
    ToleranceReport,
)
from .fedavg import MODEL_SIZES, Encryptor, make_encryptor, run_fedavg, synth_weights
from .noise import max_abs_error

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CORRECTNESS = 3
ROUNDTRIP_VALUES = 64

console = Console()


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=verbose)],
        force=True,
    )


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON benchmark config, flags override it")
    common.add_argument("--ring-degree", type=int, help="Ring degree N (default 4096)")
    common.add_argument(
        "--batch-size",
        type=int,
        action="append",
        help="Values per ciphertext, repeatable",
    )
    common.add_argument("--model-size", type=int, help="Number of weights to encrypt")
    common.add_argument(
        "--model", choices=sorted(MODEL_SIZES), help="Model-size preset (overridden by --model-size)"
    )
    common.add_argument("--sigma-rand", type=float, help="Randomization standard deviation")
    common.add_argument("--repeats", type=int, help="Timed repetitions (default 3)")
    common.add_argument("--seed", type=int, help="Base seed (default 0)")
    common.add_argument("--out", help="Write results to this path")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument(
        "--policy",
        choices=[kind.value for kind in PolicyKind],
        help="Base vector selection of the cached arm",
    )
    common.add_argument(
        "--policy-values",
        type=float,
        nargs="+",
        help="Base vector for --policy fixed",
    )
    common.add_argument(
        "--naive-sample",
        type=int,
        help="Time the scalar arms on this many values and extrapolate "
        "(default 4096, 0 times every value)",
    )
    common.add_argument("--cache-dir", help="Persist keys and cache entries here")
    common.add_argument("--no-verify", action="store_true", help="Skip decrypt checks")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hecache",
        description="Cached CKKS batch encryption benchmarks",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()
    arm_names = [arm.value for arm in ALL_ARMS]

    compare = subparsers.add_parser(
        "compare", parents=[common], help="Time every encryptor on the same weights"
    )
    compare.add_argument("--arm", action="append", choices=arm_names, help="Arms to run")
    compare.set_defaults(handler=cmd_compare)

    profile = subparsers.add_parser(
        "profile", parents=[common], help="Per-stage times of the cached arm over batch sizes"
    )
    profile.add_argument(
        "--precompute-only", action="store_true", help="Only time precompute per base size"
    )
    profile.set_defaults(handler=cmd_profile)

    fedavg = subparsers.add_parser(
        "fedavg", parents=[common], help="Federated averaging over encrypted updates"
    )
    fedavg.add_argument("--clients", type=int, help="Clients per round (default 20)")
    fedavg.add_argument("--rounds", type=int, help="Communication rounds (default 10)")
    fedavg.add_argument("--encryptor", choices=arm_names, default=Encryptor.NEMESIS.value)
    fedavg.add_argument("--parallel-clients", type=int, help="Client encryption threads")
    fedavg.add_argument("--weighted", action="store_true", help="Example-count weighted mean")
    fedavg.add_argument(
        "--mean-before-decrypt",
        action="store_true",
        help="Multiply by 1/n before decryption (depth-0 arms only)",
    )
    fedavg.set_defaults(handler=cmd_fedavg)

    roundtrip = subparsers.add_parser(
        "roundtrip", parents=[common], help="Encrypt, decrypt and report the error of every arm"
    )
    roundtrip.add_argument("--arm", action="append", choices=arm_names, help="Arms to run")
    roundtrip.set_defaults(handler=cmd_roundtrip)
    return parser


def build_config(args: argparse.Namespace) -> BenchConfig:
    """
    Merges the optional JSON config with the command-line flags.

    Raises:
    * ConfigError -- Invalid settings.
    * ParameterError -- Invalid scheme parameters.
    """
    config = BenchConfig.from_json(args.config) if args.config else BenchConfig()
    overrides: dict[str, Any] = {}
    if args.ring_degree is not None:
        overrides["params"] = config.params.with_ring_degree(args.ring_degree)
    if args.batch_size:
        overrides["batch_sizes"] = tuple(args.batch_size)
    elif args.command == "profile" and not args.config:
        params = overrides.get("params", config.params)
        overrides["batch_sizes"] = tuple(
            b for b in DEFAULT_BATCH_SIZES if b <= params.slot_count
        ) or (params.slot_count,)
    elif "params" in overrides:
        overrides["batch_sizes"] = tuple(
            min(b, overrides["params"].slot_count) for b in config.batch_sizes
        )
    if args.model is not None:
        overrides["model_size"] = MODEL_SIZES[args.model]
    if args.model_size is not None:
        overrides["model_size"] = args.model_size
    elif args.command == "roundtrip" and args.model is None:
        overrides["model_size"] = ROUNDTRIP_VALUES
    for name in (
        "sigma_rand",
        "repeats",
        "seed",
        "cache_dir",
        "clients",
        "rounds",
        "parallel_clients",
    ):
        # Subcommand-specific flags are missing from the other namespaces.
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.naive_sample is not None:
        overrides["naive_sample"] = args.naive_sample or None
    if getattr(args, "weighted", False):
        overrides["weighted"] = True
    if args.policy is not None:
        overrides["policy"] = SelectionPolicy.from_name(args.policy, args.policy_values)
    if getattr(args, "arm", None):
        overrides["arms"] = tuple(Encryptor(a) for a in args.arm)
    if args.no_verify:
        overrides["verify"] = False
    return replace(config, **overrides)


def _seconds(value: float) -> str:
    return f"{value:.4f}"


def print_summary(results: list[BenchResult], title: str) -> None:
    table = Table(title=title, show_header=True)
    table.add_column("Arm")
    table.add_column("Batch", justify="right")
    table.add_column("Repeats", justify="right")
    table.add_column("Median total (s)", justify="right")
    table.add_column("Mean total (s)", justify="right")
    table.add_column("Precompute (s)", justify="right")
    table.add_column("Reconstruct/encrypt (s)", justify="right")
    table.add_column("Randomize (s)", justify="right")
    table.add_column("Encryptions", justify="right")
    for summary in summarize(results):
        table.add_row(
            summary.arm,
            f"{summary.batch_size}",
            f"{summary.repeats}",
            _seconds(summary.median_total_s),
            _seconds(summary.mean_total_s),
            _seconds(summary.median_precompute_s),
            _seconds(summary.median_reconstruct_s),
            _seconds(summary.median_randomize_s),
            f"{summary.n_encrypts}",
        )
    console.print(table)


def print_stage_distribution(results: list[BenchResult]) -> None:
    table = Table(title="Stage distribution (median of repeats)", show_header=True)
    table.add_column("Batch", justify="right")
    table.add_column("Precompute %", justify="right")
    table.add_column("Reconstruct %", justify="right")
    table.add_column("Randomize %", justify="right")
    for summary in summarize(results):
        total = (
            summary.median_precompute_s
            + summary.median_reconstruct_s
            + summary.median_randomize_s
        )
        shares = [
            100.0 * part / total if total > 0 else 0.0
            for part in (
                summary.median_precompute_s,
                summary.median_reconstruct_s,
                summary.median_randomize_s,
            )
        ]
        table.add_row(f"{summary.batch_size}", *(f"{share:.2f}" for share in shares))
    console.print(table)


def _emit(results: list[BenchResult], args: argparse.Namespace) -> None:
    if args.out:
        emit_results(results, args.format, args.out)


def cmd_compare(args: argparse.Namespace, config: BenchConfig) -> int:
    logger.info("Parameters: %s", config.params)
    results = run_arm_comparison(config)
    print_summary(results, f"Arm comparison, {config.model_size} values")
    _emit(results, args)
    return EXIT_OK


def cmd_profile(args: argparse.Namespace, config: BenchConfig) -> int:
    logger.info("Parameters: %s", config.params)
    keys = prepare_keys(config)
    if args.precompute_only:
        results = run_precompute_sweep(config, keys)
        print_summary(results, "Precompute time per base size")
    else:
        results = run_stage_profile(config, keys)
        print_summary(results, f"Cached arm stages, {config.model_size} values")
        print_stage_distribution(results)
    _emit(results, args)
    return EXIT_OK


def cmd_fedavg(args: argparse.Namespace, config: BenchConfig) -> int:
    encryptor = Encryptor(args.encryptor)
    batch_size = config.batch_sizes[0]
    round_config = replace(
        config.round_config(encryptor, batch_size, clients=config.clients),
        mean_before_decrypt=args.mean_before_decrypt,
    )
    keys = prepare_keys(config)
    rounds = run_fedavg(round_config, keys, np.random.default_rng([config.seed, 1]))

    table = Table(title=f"FedAvg, {encryptor.value}, {config.clients} clients", show_header=True)
    table.add_column("Round", justify="right")
    table.add_column("Encrypt (s)", justify="right")
    table.add_column("Aggregate (s)", justify="right")
    table.add_column("Decrypt (s)", justify="right")
    table.add_column("Max error", justify="right")
    table.add_column("Tolerance", justify="right")
    for index, result in enumerate(rounds, start=1):
        table.add_row(
            f"{index}",
            _seconds(result.timing.encrypt_s),
            _seconds(result.timing.aggregate_s),
            _seconds(result.timing.decrypt_s),
            f"{result.max_error:.3e}",
            f"{result.tolerance:.3e}",
        )
    console.print(table)
    _emit(fedavg_results(config, encryptor, batch_size, rounds), args)
    if config.verify:
        for index, result in enumerate(rounds, start=1):
            result.check(f"fedavg {encryptor.value} round {index}")
    return EXIT_OK


def cmd_roundtrip(args: argparse.Namespace, config: BenchConfig) -> int:
    sk, pk = prepare_keys(config)
    weights = synth_weights(config.model_size, config.seed, config.distribution)
    batch_size = config.batch_sizes[0]
    table = Table(title=f"Roundtrip error, {weights.size} values", show_header=True)
    table.add_column("Arm")
    table.add_column("Ciphertexts", justify="right")
    table.add_column("Max error", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    failures = []
    for arm in config.arms:
        rng = np.random.default_rng([config.seed, ALL_ARMS.index(arm) + 1])
        encryptor = make_encryptor(
            arm, pk, config.round_config(arm, batch_size), rng, candidates=weights
        )
        cts = encryptor.encrypt(weights, rng)
        decrypted = decrypt_vector(sk, cts, encryptor.values_per_ciphertext, weights.size)
        error, index = max_abs_error(decrypted, weights)
        tolerance = encryptor.tolerance(float(np.max(np.abs(weights))))
        ok = error <= tolerance
        table.add_row(
            arm.value,
            f"{len(cts)}",
            f"{error:.3e}",
            f"{tolerance:.3e}",
            "[green]ok[/green]" if ok else "[red]FAIL[/red]",
        )
        if not ok:
            failures.append(
                ToleranceReport(
                    arm.value, error, tolerance, index, float(weights[index]), float(decrypted[index])
                )
            )
    console.print(table)
    if failures:
        raise CorrectnessError(failures[0])
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    handler: Callable[[argparse.Namespace, BenchConfig], int] = args.handler
    try:
        config = build_config(args)
        return handler(args, config)
    except (ConfigError, ParameterError, CacheConstructionError) as ex:
        logger.error("Invalid configuration: %s", ex)
        return EXIT_CONFIG
    except CorrectnessError as ex:
        logger.error("Correctness check failed: %s", ex.report)
        return EXIT_CORRECTNESS
    except HeCacheError as ex:
        logger.error("%s", ex)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
