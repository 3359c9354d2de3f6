import math

import pytest

from dpsens.checker import CheckError
from dpsens.harness import (
    EpsilonEstimate,
    NeighborSpec,
    estimate_epsilon,
    generate_neighbors,
    laplace_targets,
    run_neighbor_test,
    spec_for_program,
    violates,
)
from dpsens.expander import ExtensionRegistry, expand
from dpsens.syntax import parse_command, parse_program
from dpsens.values import BagShape, FLOAT, INT, VectorShape, distance

_RELEASE = "db : {float} @ 1;\nx : float;\nx $= lap(1.0, db.length);"
_NOISELESS = "db : {float} @ 1;\nx : float;\nx = fc(db.length);"


# ------------------------------------------------------------
# Neighbor generation
# ------------------------------------------------------------


def test_bag_neighbors_differ_by_one_row():
    spec = NeighborSpec("db", {"db": BagShape(FLOAT)}, size=5)
    left, right = generate_neighbors(spec, seed=3)
    assert len(left.store["db"]) == 5
    assert len(right.store["db"]) == 6
    assert right.store["db"][:5] == left.store["db"]
    assert distance(left.store["db"], right.store["db"], BagShape(FLOAT)).to_float() == 1


def test_bag_remove_row():
    spec = NeighborSpec("db", {"db": BagShape(FLOAT)}, size=5, op="remove-row")
    left, right = generate_neighbors(spec, seed=3)
    assert len(left.store["db"]) == 5 and len(right.store["db"]) == 4


def test_scalar_and_vector_neighbors():
    spec = NeighborSpec("x", {"x": FLOAT}, distance=2.5)
    left, right = generate_neighbors(spec, seed=0)
    assert right.store["x"] - left.store["x"] == pytest.approx(2.5)

    spec = NeighborSpec("v", {"v": VectorShape(FLOAT)}, size=4, distance=1.0)
    left, right = generate_neighbors(spec, seed=0)
    assert distance(left.store["v"], right.store["v"], VectorShape(FLOAT)).to_float() == pytest.approx(1.0)


def test_neighbors_are_seed_deterministic():
    spec = NeighborSpec("db", {"db": BagShape(FLOAT)})
    assert generate_neighbors(spec, 7)[0].store == generate_neighbors(spec, 7)[0].store
    assert (
        generate_neighbors(spec, 7)[0].store["db"]
        != generate_neighbors(spec, 8)[0].store["db"]
    )


def test_neighbor_spec_validation():
    with pytest.raises(ValueError):
        NeighborSpec("db", {"db": BagShape(FLOAT)}, size=0)
    with pytest.raises(ValueError):
        NeighborSpec("db", {"db": BagShape(FLOAT)}, op="teleport")
    with pytest.raises(ValueError):
        NeighborSpec("nope", {"db": BagShape(FLOAT)})


def test_spec_for_program_finds_the_marked_input():
    prog = parse_program(_RELEASE)
    spec = spec_for_program(prog)
    assert spec.target == "db"


def test_spec_for_program_ambiguity_is_an_error():
    prog = parse_program("a : float @ 1;\nb : float @ 2;\na = b;")
    with pytest.raises(ValueError, match="a.*b|b.*a"):
        spec_for_program(prog)
    assert spec_for_program(prog, target="b").target == "b"


def test_laplace_targets_first_occurrence_order():
    c = parse_command(
        "x $= lap(1.0, 0.0); y $= lap(1.0, x); x $= lap(2.0, y); z = 1.0;"
    )
    assert laplace_targets(c) == ("x", "y")


# ------------------------------------------------------------
# The verdict rule
# ------------------------------------------------------------


def test_verdict_examples():
    assert not violates(1.05, 1.0, 0.1)
    assert violates(math.inf, 1.0, 0.1)
    assert not violates(1.0, 1.0, 0.0)
    assert violates(1.2000001, 1.0, 0.2)


# ------------------------------------------------------------
# The estimator
# ------------------------------------------------------------


def _expanded_program(src: str):
    prog = parse_program(src)
    cmd = expand(prog.command, ExtensionRegistry.default(), [])
    return prog, cmd


def test_estimator_brackets_a_true_laplace_release():
    prog, cmd = _expanded_program(_RELEASE)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    est = estimate_epsilon(cmd, left, right, project=("x",), trials=20_000, seed=0)
    assert 0.8 <= est.epsilon_hat <= 1.1
    assert est.failed == (0, 0)
    assert est.support > 0


def test_estimator_is_seed_deterministic():
    prog, cmd = _expanded_program(_RELEASE)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    a = estimate_epsilon(cmd, left, right, project=("x",), trials=5_000, seed=5)
    b = estimate_epsilon(cmd, left, right, project=("x",), trials=5_000, seed=5)
    assert a == b


def test_estimator_swap_symmetry_within_slack():
    prog, cmd = _expanded_program(_RELEASE)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    ab = estimate_epsilon(cmd, left, right, project=("x",), trials=20_000, seed=0)
    ba = estimate_epsilon(cmd, right, left, project=("x",), trials=20_000, seed=0)
    assert abs(ab.epsilon_hat - ba.epsilon_hat) <= 0.15


def test_estimator_tracks_the_noise_width():
    estimates = {}
    for width in (0.5, 1.0, 2.0):
        src = f"db : {{float}} @ 1;\nx : float;\nx $= lap({width}, db.length);"
        prog, cmd = _expanded_program(src)
        left, right = generate_neighbors(spec_for_program(prog), seed=0)
        est = estimate_epsilon(cmd, left, right, project=("x",), trials=20_000, seed=0)
        estimates[width] = est.epsilon_hat
    assert estimates[0.5] > estimates[1.0] > estimates[2.0]
    assert estimates[0.5] == pytest.approx(2.0, abs=0.25)
    assert estimates[2.0] == pytest.approx(0.5, abs=0.15)


def test_estimator_flags_noiseless_release_as_infinite():
    prog, cmd = _expanded_program(_NOISELESS)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    est = estimate_epsilon(cmd, left, right, project=("x",), trials=2_000, seed=0)
    assert math.isinf(est.epsilon_hat)
    assert est.to_json()["epsilon_hat"] == "inf"


def test_estimator_counts_one_sided_crashes_as_events():
    # The left run (5 rows) stays in bounds; the right run (6 rows)
    # crashes, so ⊥ itself becomes a perfectly distinguishing outcome.
    src = (
        "db : {float} @ 1;\nv : [float];\nx : float;\n"
        "v = zeros[6]; x $= lap(0.5, v[db.length]);"
    )
    prog, cmd = _expanded_program(src)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    est = estimate_epsilon(cmd, left, right, project=("x",), trials=500, seed=0)
    assert est.failed[0] == 0
    assert est.failed[1] == 500
    assert math.isinf(est.epsilon_hat)


def test_estimator_rejects_non_scalar_projection():
    prog, cmd = _expanded_program(_RELEASE)
    left, right = generate_neighbors(spec_for_program(prog), seed=0)
    with pytest.raises(ValueError, match="scalar"):
        estimate_epsilon(cmd, left, right, project=("db",), trials=10, seed=0)
    with pytest.raises(ValueError):
        estimate_epsilon(cmd, left, right, project=("ghost",), trials=10, seed=0)


# ------------------------------------------------------------
# End-to-end
# ------------------------------------------------------------


def test_run_neighbor_test_pipeline():
    report, est = run_neighbor_test(_RELEASE, trials=5_000, seed=0)
    assert report.epsilon == 1.0
    assert est.project == ("x",)  # inferred from the noise statement
    assert not violates(est, report.epsilon, 0.15)


def test_run_neighbor_test_rejects_untypeable_programs():
    with pytest.raises(CheckError):
        run_neighbor_test("db : {float} @ 1;\nx : float;\nx = db[0];", trials=10)


def test_run_neighbor_test_needs_observables():
    with pytest.raises(ValueError, match="never draws noise"):
        run_neighbor_test(_NOISELESS, trials=10)
    report, est = run_neighbor_test(_NOISELESS, project=("x",), trials=2_000, seed=1)
    assert violates(est, report.epsilon, 0.15)
