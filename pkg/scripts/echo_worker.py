#!/usr/bin/env python3
"""Reference evaluation worker for the external backend.

Reads line-delimited JSON requests on stdin, answers each on stdout, and
exits 0 once it sees {"done": true}. Accuracies come from the built-in
synthetic oracle, so a run through this worker matches a run against the
synthetic backend with the same sigma.

Usage: echo_worker.py [--sigma S] [--drop-every N]

--drop-every N makes the worker exit without answering every N-th
request; useful for exercising the client's respawn-and-resend path.
"""

import argparse
import json
import sys

from pnas.cells import parse_cell_key
from pnas.evaluators import SyntheticOracle, SyntheticOracleConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sigma", type=float, default=0.01)
    parser.add_argument("--drop-every", type=int, default=0)
    args = parser.parse_args()
    oracle = SyntheticOracle(SyntheticOracleConfig(noise_sigma=args.sigma))

    handled = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        if request.get("done"):
            return 0
        handled += 1
        if args.drop_every and handled % args.drop_every == 0:
            return 0  # simulate a worker dying mid-batch
        try:
            cell = parse_cell_key(request["cell"])
            response = {"id": request["id"], "accuracy": oracle.noisy_accuracy(cell, request["seed"])}
        except (KeyError, ValueError) as exc:
            response = {"id": request.get("id"), "error": str(exc)}
        print(json.dumps(response, sort_keys=True), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
