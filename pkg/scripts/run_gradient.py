#!/usr/bin/env python3
"""Train the noisy-gradient-descent corpus program end to end.

Builds the logistic-regression trainer for a chosen feature count and
epoch count (the corpus file is the ``--features 784 --epochs 100``
instance), types it, interprets it on a synthetic bag, and reports the
privacy cost next to the training accuracy the released weights reach.
Defaults are desk-sized so the tree-walking interpreter finishes in
seconds; expect modest accuracy, not full-dataset training figures.
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from make_gradient_data import make_rows  # noqa: E402

from dpsens.checker import check_program  # noqa: E402
from dpsens.interpreter import Final, RunConfig, exec_cmd  # noqa: E402
from dpsens.values import ProgramState, value_from_json  # noqa: E402


def build_program(
    features: int,
    epochs: int,
    *,
    count_width: float = 10.0,
    sum_width: float = 5000.0,
    clip_bound: float = 100.0,
    omega: float = 1e-6,
    lamb: float = 0.1,
    rate: float = 0.1,
) -> str:
    """The corpus trainer, parametric in the row width and epoch count.

    Rows carry ``features`` floats plus a ±1 label; working rows gain a
    bias slot in front, so the weight vector has ``features + 1`` entries.
    """
    d1 = features + 1  # weights / release count / raw row length
    d2 = features + 2  # biased row length (label in the last slot)
    omega_lit = f"{omega:.1e}"  # the grammar wants a decimal point: 1.0e-06
    return f"""
db : {{[float]}} @ 1;
db1 : {{[float]}};
dws : {{[float]}};
dws_j : {{float}};
w : [float];
trow : [float];
trow1 : [float];
twout : [float];
tf_out : float;
j_sum : float;
dt : float;
temp : float;
prob : float;
sc : float;
size : float;
lamb : float;
rate : float;
i : int;
j : int;
epoch : int;

w = zeros[{d1}];
lamb = {lamb};
rate = {rate};
epoch = 0;
size $= lap({count_width}, fc(length(db)));
ac(epoch, {epochs}, {omega_lit},
   bmap(db, db1, trow, i, trow1,
        trow1 = zeros[{d2}];
        trow1[0] = 1.0;
        repeat(j, {d1}, trow1[j + 1] = trow[j];);
        j = 0;);
   i = 0;
   trow1 = zeros[{d2}];
   bmap(db1, dws, trow1, i, twout,
        twout = zeros[{d1}];
        repeat(j, {d1}, twout[j] = trow1[j];);
        j = 0;
        dt = clip(dot(twout, w), {clip_bound});
        temp = exp(-1.0 * trow1[{d1}] * dt);
        prob = 1.0 / (1.0 + temp);
        sc = (1.0 - prob) * trow1[{d1}];
        twout = scale(sc, twout);
        dt = 0.0;
        temp = 0.0;
        prob = 0.0;
        sc = 0.0;);
   repeat(j, {d1},
        i = 0;
        twout = zeros[{d1}];
        tf_out = 0.0;
        bmap(dws, dws_j, twout, i, tf_out, tf_out = twout[j];);
        i = 0;
        tf_out = 0.0;
        bsum(dws_j, j_sum, i, tf_out, 1.0);
        j_sum $= lap({sum_width}, j_sum);
        w[j] = w[j] + (j_sum / size - 2.0 * lamb * w[j]) * rate;);
   db1 = {{}};
   dt = 0.0;
   dws = {{}};
   dws_j = {{}};
   i = 0;
   j = 0;
   prob = 0.0;
   sc = 0.0;
   temp = 0.0;
   tf_out = 0.0;
   trow = zeros[{d1}];
   trow1 = zeros[{d2}];
   twout = zeros[{d1}];
);
"""


def accuracy(w, rows) -> float:
    data = np.asarray(rows)
    x, labels = data[:, :-1], data[:, -1]
    biased = np.hstack([np.ones((len(rows), 1)), x])
    predicted = np.sign(biased @ np.asarray(w))
    predicted[predicted == 0] = 1.0
    return float(np.mean(predicted == labels))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=20)
    parser.add_argument("--features", type=int, default=4)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0, help="noise seed")
    parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--fuel", type=int, default=10**9)
    parser.add_argument(
        "--sum-width",
        type=float,
        default=5000.0,
        help="Laplace width per released gradient sum; the corpus value "
        "drowns a 20-row bag, try 20 to watch accuracy buy epsilon",
    )
    parser.add_argument("--count-width", type=float, default=10.0)
    parser.add_argument("--clip", type=float, default=100.0)
    args = parser.parse_args(argv)

    source = build_program(
        args.features,
        args.epochs,
        count_width=args.count_width,
        sum_width=args.sum_width,
        clip_bound=args.clip,
    )
    report = check_program(source)
    print(f"typed: epsilon = {report.epsilon:.6f}, delta = {report.delta:g}")

    rows = make_rows(args.rows, args.features, args.data_seed)
    db = value_from_json({"bag": rows}, report.program.decls["db"])
    state = ProgramState.initial(report.program.decls, {"db": db})

    started = time.perf_counter()
    outcome = exec_cmd(state, report.expanded, RunConfig(seed=args.seed, fuel=args.fuel))
    elapsed = time.perf_counter() - started
    if not isinstance(outcome, Final):
        print(f"run did not finish: {outcome}", file=sys.stderr)
        return 2

    w = outcome.state.store["w"]
    acc = accuracy(w, rows)
    print(f"ran {args.epochs} epochs on {args.rows} rows in {elapsed:.2f}s")
    print(f"training accuracy of released weights: {acc:.2f}")
    print(f"released size estimate: {outcome.state.store['size']:.2f} (true {args.rows})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
