"""Acceptance suite: one test per numbered shipping criterion.

Each test enforces both the stated tolerance and the stated runtime
budget, and prints a single ``criterion N: PASS`` line (visible under
``pytest -s``; under plain ``pytest -v`` the test's own PASS/FAIL line
serves the same purpose).  Criterion 8 is the explicit record of what
this repository does *not* reproduce and which criteria substitute.
"""

import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from conftest import CORPUS, ROOT
from oracles import adv_comp_oracle, bag_distance_bf
from progen import random_pair, random_program

from dpsens.checker import PrivacyCost, check_program, compose_iterations
from dpsens.harness import run_neighbor_test, violates
from dpsens.interpreter import Final, RunConfig, exec_cmd
from dpsens.values import (
    BagShape,
    ExtReal,
    FLOAT,
    ProgramState,
    VectorShape,
    distance,
    state_distance,
)


@contextmanager
def _criterion(n: int, budget_s: float):
    t0 = time.monotonic()
    yield
    elapsed = time.monotonic() - t0
    assert elapsed < budget_s, (
        f"criterion {n} exceeded its {budget_s:.0f}s budget ({elapsed:.1f}s)"
    )
    print(f"criterion {n}: PASS ({elapsed:.2f}s < {budget_s:.0f}s)")


def _corpus(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def test_criterion_1_average_income_budget():
    """`check` prices the average-income release at exactly (2.0, 0),
    with the intermediate sum exactly 1000-sensitive."""
    with _criterion(1, 1.0):
        report = check_program(_corpus("avg_income.fuzzi"))
        assert report.cost.epsilon == Fraction(2)
        assert report.cost.delta == Fraction(0)
        assert report.context.sens("sum") == ExtReal.of(1000)


def test_criterion_2_gradient_descent_budget():
    """`check` prices the synthetic-data gradient trainer at
    epsilon = 11.02 +/- 0.01 and delta = 1e-6, decomposed as a 0.10
    pre-loop release plus 100 epochs of 785/5000 each under the
    square-root composition rule at omega = 1e-6."""
    with _criterion(2, 30.0):
        report = check_program(_corpus("gradient_descent.fuzzi"))
        assert report.epsilon == pytest.approx(11.02, abs=0.01)
        assert report.delta == 1e-6
        laps = [t for t in report.trace if t["kind"] == "laplace"]
        assert laps[0]["epsilon"] == pytest.approx(0.10)
        (ac_entry,) = [t for t in report.trace if t.get("name") == "ac"]
        assert ac_entry["per_pass"]["epsilon"] == pytest.approx(785 / 5000)
        assert ac_entry["composition"] == "advanced"
        # exact formula value 10.92167...; quoted as ~10.923 informally
        assert ac_entry["epsilon"] == pytest.approx(10.923, abs=0.01)


def test_criterion_3_distance_oracle():
    """The worked distance pair evaluates to exactly 2 (as vectors) and
    4 (as bags); 500 random small bags agree with brute-force matching."""
    with _criterion(3, 10.0):
        a, b = (1.0, 2.0, 5.0), (1.0, 3.0, 4.0)
        assert distance(a, b, VectorShape(FLOAT)) == ExtReal.of(2)
        assert distance(a, b, BagShape(FLOAT)) == ExtReal.of(4)

        rng = random.Random(23)
        pool = (0.0, 0.5, 1.0, 2.5)
        for _ in range(500):
            left = tuple(rng.choice(pool) for _ in range(rng.randint(0, 6)))
            right = tuple(rng.choice(pool) for _ in range(rng.randint(0, 6)))
            got = distance(left, right, BagShape(FLOAT))
            assert got == ExtReal.of(bag_distance_bf(left, right))


def test_criterion_4_deterministic_soundness_sweep():
    """1000 generated deterministic programs, all typechecking at zero
    cost; on 10 random in-distance state pairs each, every final store
    stays within the derived output context (1e-9 float headroom), and
    non-final outcomes, if any, coincide on both sides."""
    with _criterion(4, 120.0):
        rng = random.Random(20260816)
        failures: list[str] = []
        for i in range(1000):
            src = random_program(rng)
            report = check_program(src)  # generator output must typecheck
            assert float(report.cost.epsilon) == 0.0
            assert float(report.cost.delta) == 0.0
            for _ in range(10):
                left, right = random_pair(
                    rng, report.program.decls, report.program.sensitivities
                )
                cfg = RunConfig(seed=0, fuel=10_000)
                out_l = exec_cmd(
                    ProgramState.initial(report.program.decls, left),
                    report.expanded,
                    cfg,
                )
                out_r = exec_cmd(
                    ProgramState.initial(report.program.decls, right),
                    report.expanded,
                    cfg,
                )
                if type(out_l) is not type(out_r):
                    failures.append(
                        f"program {i}: {type(out_l).__name__} vs "
                        f"{type(out_r).__name__}\n{src}"
                    )
                    break
                if not isinstance(out_l, Final):
                    continue  # synchronized divergence
                for x, d in state_distance(out_l.state, out_r.state).items():
                    sens = report.context.sens(x)
                    if sens.is_inf:
                        continue
                    bound = float(sens.frac)
                    if d.to_float() > bound * (1 + 1e-9) + 1e-9:
                        failures.append(
                            f"program {i}: {x} moved {d.to_float()} "
                            f"> bound {bound}\n{src}"
                        )
                        break
        assert not failures, "\n\n".join(failures[:3])


def test_criterion_5_partition_semantics():
    """Interpreting the expanded partition of [1.2, 2.3, 3.4] into four
    floor groups yields [[], [1.2], [2.3], [3.4]] exactly."""
    with _criterion(5, 1.0):
        report = check_program(_corpus("partition_floor.fuzzi"))
        state = ProgramState.initial(
            report.program.decls, {"in_bag": (1.2, 2.3, 3.4)}
        )
        out = exec_cmd(state, report.expanded, RunConfig(seed=0, fuel=10**6))
        assert isinstance(out, Final)
        assert out.state.store["parts"] == ((), (1.2,), (2.3,), (3.4,))


def test_criterion_6_harness_calibration():
    """The claimed budget of the single-draw release (epsilon = 1.0)
    survives the estimator at slack 0.15 on 10/10 seeds with 1e5 trials
    per side; the noiseless variant is flagged on 10/10 seeds."""
    with _criterion(6, 60.0):
        release = _corpus("laplace_release.fuzzi")
        noiseless = _corpus("noiseless_release.fuzzi")
        for seed in range(10):
            report, est = run_neighbor_test(release, trials=100_000, seed=seed)
            assert report.epsilon == 1.0
            assert not violates(est, report.epsilon, 0.15), (
                f"seed {seed}: {est.epsilon_hat:.4f} flagged a true claim"
            )
        for seed in range(10):
            report, est = run_neighbor_test(
                noiseless, project=("x",), trials=10_000, seed=seed
            )
            assert violates(est, report.epsilon, 0.15), (
                f"seed {seed}: noiseless release escaped detection"
            )


def test_criterion_7_composition_arithmetic():
    """The square-root composition matches an independently coded
    oracle on 100 random tuples to 1e-12 relative error, and the n-fold
    sum is chosen exactly when the other rule is worse in both
    components."""
    with _criterion(7, 1.0):
        rng = random.Random(7_2026)
        for _ in range(100):
            eps = rng.uniform(1e-3, 2.0)
            delta = rng.choice((0.0, rng.uniform(0.0, 1e-4)))
            n = rng.randint(1, 500)
            omega = 10.0 ** rng.uniform(-9.0, -0.01)
            want_e, want_d, want_label = adv_comp_oracle(eps, delta, n, omega)
            got, label = compose_iterations(
                PrivacyCost(Fraction(eps), Fraction(delta)), n, omega
            )
            assert label == want_label
            assert float(got.epsilon) == pytest.approx(want_e, rel=1e-12)
            assert float(got.delta) == pytest.approx(want_d, rel=1e-12, abs=1e-300)

        # the fallback needs BOTH components worse, not just epsilon
        simple, label = compose_iterations(
            PrivacyCost(Fraction(2), Fraction(0)), 3, omega=0.9
        )
        assert label == "simple" and simple.epsilon == Fraction(6)
        adv, label = compose_iterations(
            PrivacyCost(Fraction(0), Fraction(0)), 3, omega=0.5
        )
        assert label == "advanced" and float(adv.delta) == 0.5


def test_criterion_8_paper_scale_results_substituted():
    """The headline full-dataset training accuracies are explicitly NOT
    reproduced here: no datasets ship with the repository and the
    corpus trainer generates its own synthetic rows.  What the static
    analysis actually guarantees — budgets and sensitivity soundness —
    is covered by criteria 2 and 4–6 instead."""
    with _criterion(8, 1.0):
        names = set(globals())
        for n in (2, 4, 5, 6):
            assert any(name.startswith(f"test_criterion_{n}_") for name in names)
        for sub in ("corpus", "src", "scripts", "tests"):
            tree = ROOT / sub
            for pattern in ("*.csv", "*.npz", "*.pkl", "*.gz"):
                assert not list(tree.rglob(pattern)), f"dataset file under {sub}/"
        generator = (ROOT / "scripts" / "make_gradient_data.py").read_text(
            encoding="utf-8"
        )
        assert "default_rng" in generator  # rows are drawn, not shipped
