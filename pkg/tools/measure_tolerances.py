"""
Measures decode errors empirically and prints them next to the tolerances in
hecache.noise, both the frozen ones and the analytic fallbacks.

    PYTHONPATH=. python tools/measure_tolerances.py --ring-degree 4096 \
        --trials 1000 --keys 10 --seed 0

Trials are spread evenly over --keys key pairs, since the fresh-encryption
error depends on the key. The reported value is the largest slot error seen
over all trials. The frozen constants in hecache.noise.MEASURED_ERRORS come
from this command.
"""
from __future__ import annotations
import argparse
import sys

import numpy as np
from rich.console import Console
from rich.table import Table

from hecache.cache import SelectionPolicy, nemesis_encrypt, precompute
from hecache.ckks import decrypt, encrypt, keygen
from hecache.encoding import decode, encode_fast
from hecache.noise import (
    Tolerances,
    analytic_encoding_bound,
    analytic_fresh_bound,
)
from hecache.params import SchemeParams


def measure(params: SchemeParams, trials: int, keys: int, seed: int) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    worst = {"encode": 0.0, "fresh": 0.0, "cached": 0.0}
    per_key = max(1, -(-trials // keys))
    done = 0
    while done < trials:
        sk, pk = keygen(params, rng)
        cache = precompute([], SelectionPolicy.all_ones(), pk, params, rng)
        for _ in range(min(per_key, trials - done)):
            m = rng.uniform(-1.0, 1.0, params.slot_count)
            encoded = encode_fast(m, params)
            worst["encode"] = max(worst["encode"], float(np.max(np.abs(decode(encoded) - m))))
            fresh = decode(decrypt(sk, encrypt(pk, encoded, rng)))
            worst["fresh"] = max(worst["fresh"], float(np.max(np.abs(fresh - m))))
            cached = decode(decrypt(sk, nemesis_encrypt(cache, m, None, rng)))
            worst["cached"] = max(worst["cached"], float(np.max(np.abs(cached - m))))
            done += 1
    return worst


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--ring-degree", type=int, default=4096)
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--keys", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if args.trials < 1 or args.keys < 1:
        parser.error("--trials and --keys must be positive")

    params = SchemeParams.reference().with_ring_degree(args.ring_degree)
    worst = measure(params, args.trials, args.keys, args.seed)
    tolerances = Tolerances.for_params(params)
    rows = [
        ("encode/decode", worst["encode"], tolerances.encode, analytic_encoding_bound(params)),
        ("fresh encryption", worst["fresh"], tolerances.fresh, analytic_fresh_bound(params)),
        ("cached encryption", worst["cached"], tolerances.cached, None),
    ]

    source = "frozen" if tolerances.measured else "analytic"
    table = Table(
        title=f"Measured errors, {params}, {args.trials} trials over {args.keys} keys"
    )
    table.add_column("Quantity")
    table.add_column("Measured max", justify="right")
    table.add_column(f"Tolerance ({source})", justify="right")
    table.add_column("Headroom", justify="right")
    table.add_column("Analytic bound", justify="right")
    for name, measured, tolerance, analytic in rows:
        headroom = f"{tolerance / measured:.2f}x" if measured else "-"
        table.add_row(
            name,
            f"{measured:.3e}",
            f"{tolerance:.3e}",
            headroom,
            "-" if analytic is None else f"{analytic:.3e}",
        )
    Console().print(table)
    return 0 if all(measured <= tolerance for _, measured, tolerance, _ in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
