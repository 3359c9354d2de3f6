#!/usr/bin/env python3
"""Generate a synthetic logistic-regression training bag.

Rows are ``features + 1`` floats: the features, then a ±1 label in the
last slot.  Labels come from a random linear separator with a little
sign noise, so a trained classifier has something to find.  The output
is a JSON store file suitable for ``dpsens run --input``:

    {"db": {"bag": [[x0, ..., x_{d-1}, label], ...]}}
"""

import argparse
import json
import sys

import numpy as np


def make_rows(rows: int, features: int, seed: int, flip: float = 0.05) -> list:
    rng = np.random.default_rng(seed)
    w_true = rng.normal(size=features)
    x = rng.normal(size=(rows, features))
    labels = np.sign(x @ w_true)
    labels[labels == 0] = 1.0
    noise = rng.random(rows) < flip
    labels[noise] *= -1.0
    return [list(map(float, row)) + [float(lab)] for row, lab in zip(x, labels)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=20, help="bag size (default: 20)")
    parser.add_argument(
        "--features",
        type=int,
        default=784,
        help="features per row, label excluded (default: 784, matching corpus/gradient_descent)",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--flip", type=float, default=0.05, help="label noise rate")
    parser.add_argument("--out", default="-", help="output path (default: stdout)")
    args = parser.parse_args(argv)

    store = {"db": {"bag": make_rows(args.rows, args.features, args.seed, args.flip)}}
    text = json.dumps(store)
    if args.out == "-":
        print(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.rows} rows x {args.features + 1} floats to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
