#!/usr/bin/env python3
"""Calibration sweep for the epsilon estimator.

Three checks, each printed as it completes:

1. A single Laplace release claiming ε = 1 must pass at the default
   slack on every seed (the estimate is a lower-bound witness, so it
   should sit just under the claim).
2. A noiseless release of the same statistic must be flagged on every
   seed (its two output distributions are disjoint).
3. Halving/doubling the noise width should double/halve the estimate —
   the estimator tracks the true ε, not merely a pass/fail threshold.
"""

import argparse
import sys
import time

from dpsens import harness

RELEASE = """
db : {float} @ 1;
x : float;
x $= lap(%s, db.length);
"""

NOISELESS = """
db : {float} @ 1;
x : float;
x = fc(db.length);
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=100_000)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--slack", type=float, default=0.15)
    args = parser.parse_args(argv)

    started = time.perf_counter()
    print(f"laplace release, claim 1.0, {args.trials} trials/side:")
    passes = 0
    for seed in range(args.seeds):
        report, est = harness.run_neighbor_test(
            RELEASE % "1.0", trials=args.trials, seed=seed
        )
        bad = harness.violates(est, report.epsilon, args.slack)
        passes += not bad
        print(f"  seed {seed}: eps_hat = {est.epsilon_hat:.4f} {'VIOLATION' if bad else 'pass'}")
    print(f"  {passes}/{args.seeds} passes at slack {args.slack}")

    print("noiseless release, claim 0.0:")
    flagged = 0
    for seed in range(args.seeds):
        _, est = harness.run_neighbor_test(
            NOISELESS, project=("x",), trials=args.trials, seed=seed
        )
        flagged += harness.violates(est, 0.0, args.slack)
        print(f"  seed {seed}: eps_hat = {est.epsilon_hat}")
    print(f"  {flagged}/{args.seeds} flagged")

    print("width sweep (true epsilon = 1/width):")
    for width in (0.5, 1.0, 2.0):
        report, est = harness.run_neighbor_test(RELEASE % width, trials=args.trials)
        print(
            f"  width {width}: claimed = {report.epsilon:.2f}, "
            f"eps_hat = {est.epsilon_hat:.3f}"
        )

    print(f"total {time.perf_counter() - started:.1f}s")
    return 0 if passes == args.seeds and flagged == args.seeds else 1


if __name__ == "__main__":
    sys.exit(main())
