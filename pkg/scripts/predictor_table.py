#!/usr/bin/env python3
"""Rank-correlation table for all predictor kinds on the synthetic oracle.

Runs the harness and prints one row per predictor with the mean
within-level coefficient (rho_fit) and the mean one-level-up
extrapolation coefficient (rho_ext) at every level.

Example:
    python3 scripts/predictor_table.py -T 5 -K 64 -R 1000
"""

import argparse
import time

from pnas.evaluators import SyntheticOracle, SyntheticOracleConfig
from pnas.harness import HarnessConfig, predictor_harness


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("-T", "--trials", type=int, default=5)
    parser.add_argument("-K", "--sample-size", type=int, default=64)
    parser.add_argument("-R", "--pool-size", type=int, default=1000)
    parser.add_argument("-B", "--blocks", type=int, default=5)
    parser.add_argument("--predictors", default="mlp,rnn,mlp-ens,rnn-ens")
    parser.add_argument("--sigma", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    kinds = tuple(part.strip() for part in args.predictors.split(",") if part.strip())
    config = HarnessConfig(
        trials=args.trials,
        sample_size=args.sample_size,
        pool_size=args.pool_size,
        b_max=args.blocks,
        kinds=kinds,
        seed=args.seed,
    )
    started = time.perf_counter()
    report = predictor_harness(config, SyntheticOracle(SyntheticOracleConfig(noise_sigma=args.sigma)))

    header = "predictor " + " ".join(f"| fit_{b} ext_{b + 1}" for b in report.levels)
    print(header)
    for kind in report.kinds:
        cells = " ".join(
            f"| {report.mean_fit(kind, b):+.3f} {report.mean_extrapolate(kind, b):+.3f}"
            for b in report.levels
        )
        print(f"{kind:9s} {cells}")
    print(f"[{time.perf_counter() - started:.1f}s]")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
