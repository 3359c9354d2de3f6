import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsens.expander import ExtensionRegistry, expand, strip_hints
from dpsens.interpreter import (
    Crashed,
    Diverged,
    EvalError,
    Final,
    RunConfig,
    eval_expr,
    exec_cmd,
    sample_laplace,
)
from dpsens.syntax import parse_command, parse_expr, parse_program
from dpsens.values import (
    FLOAT,
    INT,
    BagShape,
    ProgramState,
    VectorShape,
    value_from_json,
)

from conftest import CORPUS
from oracles import bmap_oracle, bsum_oracle, laplace_cdf, partition_oracle


def _state(decls, **overrides):
    return ProgramState.initial(decls, overrides)


def _run_program(src: str, overrides=None, seed=0, fuel=10**6):
    prog = parse_program(src)
    expanded = expand(prog.command, ExtensionRegistry.default().with_definitions(prog.extensions), [])
    state = ProgramState.initial(
        prog.decls,
        {k: value_from_json(v, prog.decls[k]) for k, v in (overrides or {}).items()},
    )
    return exec_cmd(state, expanded, RunConfig(seed=seed, fuel=fuel)), prog


# ------------------------------------------------------------
# Expressions
# ------------------------------------------------------------


def _eval_src(src: str, decls, **overrides):
    return eval_expr(_state(decls, **overrides), parse_expr(src))


def test_arithmetic_and_comparison():
    decls = {"x": INT, "y": FLOAT}
    assert _eval_src("x + 2 * 3", decls, x=1) == 7
    assert _eval_src("y / 4.0", decls, y=10.0) == 2.5
    assert _eval_src("x < 2 && !(x == 2)", decls, x=1) is True


def test_integer_division_truncates_toward_zero():
    decls = {"a": INT, "b": INT}
    assert _eval_src("a / b", decls, a=7, b=2) == 3
    assert _eval_src("a / b", decls, a=-7, b=2) == -3
    assert _eval_src("a / b", decls, a=7, b=-2) == -3


def test_division_by_zero_is_a_runtime_error():
    with pytest.raises(EvalError):
        _eval_src("a / b", {"a": INT, "b": INT}, a=1, b=0)
    with pytest.raises(EvalError):
        _eval_src("y / 0.0", {"y": FLOAT}, y=1.0)


def test_short_circuit_evaluation():
    # The right operand would crash; && must not evaluate it.
    decls = {"v": VectorShape(FLOAT), "i": INT}
    assert _eval_src("false && v[9] < 1.0", decls) is False
    assert _eval_src("true || v[9] < 1.0", decls) is True


def test_index_and_length():
    decls = {"v": VectorShape(FLOAT)}
    assert _eval_src("v[1]", decls, v=(1.0, 5.0)) == 5.0
    assert _eval_src("v.length", decls, v=(1.0, 5.0)) == 2
    with pytest.raises(EvalError, match="out of bounds"):
        _eval_src("v[2]", decls, v=(1.0, 5.0))


def test_builtins():
    decls = {"v": VectorShape(FLOAT), "x": FLOAT, "n": INT}
    assert _eval_src("fc(n)", decls, n=3) == 3.0
    assert _eval_src("clip(x, 2.0)", decls, x=5.0) == 2.0
    assert _eval_src("clip(x, 2.0)", decls, x=-5.0) == -2.0
    assert _eval_src("clip(x, 2.0)", decls, x=0.5) == 0.5
    assert _eval_src("dot(v, v)", decls, v=(3.0, 4.0)) == 25.0
    assert _eval_src("scale(x, v)", decls, x=2.0, v=(1.0, 2.0)) == (2.0, 4.0)
    assert _eval_src("zeros[3]", decls) == (0.0, 0.0, 0.0)
    assert _eval_src("exp(x)", decls, x=0.0) == 1.0
    assert _eval_src("log(x)", decls, x=1.0) == 0.0


def test_partial_builtins_raise():
    decls = {"x": FLOAT, "u": VectorShape(FLOAT), "v": VectorShape(FLOAT)}
    with pytest.raises(EvalError, match="log"):
        _eval_src("log(x)", decls, x=0.0)
    with pytest.raises(EvalError, match="exp"):
        _eval_src("exp(x)", decls, x=1e9)
    with pytest.raises(EvalError, match="dot"):
        _eval_src("dot(u, v)", decls, u=(1.0,), v=(1.0, 2.0))


# ------------------------------------------------------------
# Commands
# ------------------------------------------------------------


def test_assignment_and_sequencing():
    outcome, prog = _run_program("x : int;\ny : int;\nx = 2; y = x * x; x = 0;")
    assert isinstance(outcome, Final)
    assert outcome.state.store == {"x": 0, "y": 4}


def test_exec_does_not_mutate_input_state():
    prog = parse_program("x : int;\nx = 5;")
    state = ProgramState.initial(prog.decls)
    exec_cmd(state, prog.command, RunConfig())
    assert state.store["x"] == 0


def test_index_assignment_copies():
    outcome, _ = _run_program(
        "v : [float];\nw : [float];\nv = zeros[2]; w = v; v[0] = 9.0;"
    )
    assert outcome.state.store["v"] == (9.0, 0.0)
    assert outcome.state.store["w"] == (0.0, 0.0)


def test_length_assignment_grows_with_defaults_and_truncates():
    outcome, _ = _run_program(
        "v : [float];\nw : [float];\n"
        "v = zeros[2]; v[1] = 5.0; v.length = 4; w = v; w.length = 1;"
    )
    assert outcome.state.store["v"] == (0.0, 5.0, 0.0, 0.0)
    assert outcome.state.store["w"] == (0.0,)


def test_negative_length_diverges():
    outcome, _ = _run_program("v : [float];\nn : int;\nn = 0 - 1; v.length = n;")
    assert isinstance(outcome, Diverged)


def test_if_and_while():
    outcome, _ = _run_program(
        "i : int;\nacc : int;\n"
        "while i < 5 do acc = acc + i; i = i + 1; end\n"
        "if acc == 10 then acc = 1; else acc = 0; end"
    )
    assert outcome.state.store == {"i": 5, "acc": 1}


def test_while_out_of_fuel_diverges():
    outcome, _ = _run_program("i : int;\nwhile 0 < 1 do i = 0; end", fuel=500)
    assert isinstance(outcome, Diverged)


def test_crash_reports_location():
    outcome, _ = _run_program("v : [float];\nx : float;\nx = v[3];")
    assert isinstance(outcome, Crashed)
    assert "out of bounds" in outcome.reason


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_seed_determinism(seed):
    src = "x : float;\ny : float;\nx $= lap(1.0, 0.0); y $= lap(2.0, x);"
    a, _ = _run_program(src, seed=seed)
    b, _ = _run_program(src, seed=seed)
    assert a.state.store == b.state.store


def test_different_seeds_differ():
    src = "x : float;\nx $= lap(1.0, 0.0);"
    a, _ = _run_program(src, seed=0)
    b, _ = _run_program(src, seed=1)
    assert a.state.store["x"] != b.state.store["x"]


_loop_src = (
    "i : int;\nn : int;\nacc : int;\n"
    "while i < n do acc = acc + i; i = i + 1; end"
)


@given(st.integers(0, 30), st.integers(0, 200))
@settings(max_examples=30)
def test_fuel_monotonicity(n, extra):
    base, prog = _run_program(_loop_src, overrides={"n": n}, fuel=n * 3 + 10)
    more, _ = _run_program(_loop_src, overrides={"n": n}, fuel=n * 3 + 10 + extra)
    assert isinstance(base, Final) == isinstance(more, Final)
    if isinstance(base, Final):
        assert base.state.store == more.state.store


def test_fuel_exhaustion_is_deterministic():
    out1, _ = _run_program(_loop_src, overrides={"n": 10**9}, fuel=100)
    out2, _ = _run_program(_loop_src, overrides={"n": 10**9}, fuel=100)
    assert isinstance(out1, Diverged) and isinstance(out2, Diverged)


# ------------------------------------------------------------
# Laplace sampling
# ------------------------------------------------------------


def test_laplace_moments():
    rng = np.random.default_rng(7)
    xs = np.array([sample_laplace(3.0, 2.0, rng) for _ in range(40_000)])
    assert xs.mean() == pytest.approx(3.0, abs=0.05)
    assert np.abs(xs - 3.0).mean() == pytest.approx(2.0, abs=0.05)


def test_laplace_cdf_agreement():
    rng = np.random.default_rng(11)
    xs = np.array([sample_laplace(0.0, 1.0, rng) for _ in range(40_000)])
    for q in (-2.0, -0.5, 0.0, 0.5, 2.0):
        assert (xs <= q).mean() == pytest.approx(laplace_cdf(q, 0.0, 1.0), abs=0.01)


# ------------------------------------------------------------
# Extension semantics against the oracles
# ------------------------------------------------------------

_float_rows = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), max_size=6
)


@given(_float_rows)
@settings(max_examples=40)
def test_bmap_matches_oracle(rows):
    outcome, _ = _run_program(
        "db : {float} @ 1;\nout : {float};\nt : float;\ni : int;\ns : float;\n"
        "bmap(db, out, t, i, s, s = t * t + 1.0;);",
        overrides={"db": {"bag": rows}},
    )
    assert isinstance(outcome, Final)
    assert list(outcome.state.store["out"]) == bmap_oracle(rows, lambda t: t * t + 1.0)


@given(_float_rows, st.floats(min_value=0.5, max_value=20, allow_nan=False))
@settings(max_examples=40)
def test_bsum_matches_oracle(rows, bound):
    outcome, _ = _run_program(
        "db : {float} @ 1;\ntotal : float;\ni : int;\ns : float;\n"
        f"bsum(db, total, i, s, {bound!r});",
        overrides={"db": {"bag": rows}},
    )
    assert isinstance(outcome, Final)
    assert outcome.state.store["total"] == pytest.approx(bsum_oracle(rows, bound))


def test_partition_worked_example(corpus):
    outcome, prog = _run_program(
        corpus("partition_floor.fuzzi"), overrides={"in_bag": {"bag": [1.2, 2.3, 3.4]}}
    )
    assert isinstance(outcome, Final)
    assert outcome.state.store["parts"] == ((), (1.2,), (2.3,), (3.4,))


_PARTITION_SRC = (CORPUS / "partition_floor.fuzzi").read_text(encoding="utf-8")


@given(_float_rows)
@settings(max_examples=30)
def test_partition_matches_oracle(rows):
    outcome, _ = _run_program(_PARTITION_SRC, overrides={"in_bag": {"bag": rows}})
    assert isinstance(outcome, Final)

    def classify(v):
        if v < 1.0:
            return 0
        if v < 2.0:
            return 1
        if v < 3.0:
            return 2
        return 3

    got = [sorted(part) for part in outcome.state.store["parts"]]
    want = [sorted(part) for part in partition_oracle(rows, classify, 4)]
    assert got == want


def test_vmap_runs_elementwise():
    outcome, _ = _run_program(
        "v : [float] @ 1;\nout : [float];\nt : float;\ni : int;\ns : float;\n"
        "v = zeros[3]; v[0] = 1.0; v[1] = 2.0; v[2] = 3.0;\n"
        "vmap(v, out, t, i, s, s = t + t;);",
        overrides={},
    )
    assert outcome.state.store["out"] == (2.0, 4.0, 6.0)


def test_hints_do_not_affect_execution():
    src = (
        "db : {float} @ 1;\nout : {float};\nt : float;\ni : int;\ns : float;\n"
        "x : float;\n"
        "bmap(db, out, t, i, s, s = t * 2.0;); x $= lap(1.0, 0.0);"
    )
    prog = parse_program(src)
    expanded = expand(prog.command, ExtensionRegistry.default(), [])
    state = ProgramState.initial(
        prog.decls, {"db": value_from_json({"bag": [1.0, 2.0]}, prog.decls["db"])}
    )
    with_hints = exec_cmd(state, expanded, RunConfig(seed=3))
    without = exec_cmd(state, strip_hints(expanded), RunConfig(seed=3))
    assert with_hints.state.store == without.state.store


def test_repeat_counts():
    outcome, _ = _run_program(
        "x : int;\nj : int;\nrepeat(j, 5, x = x + 2;);"
    )
    assert outcome.state.store["x"] == 10
