"""A probabilistic big-step interpreter for expanded programs.

Execution works on a mutable copy of the input state's store; values
themselves are immutable tuples/scalars, so assignment copies by reference
while still giving value semantics (`x = v; x[0] = 1.0;` never changes `v`).

Partiality is split into two different outcomes:

  * `Crashed` — an expression error: index out of bounds, division by
    zero, `log` outside its domain, `exp` overflow, mismatched `dot`
    operands.
  * `Diverged` — a `while` loop that exhausts its fuel (each loop
    iteration consumes one unit of a per-loop budget of `cfg.fuel`) or a
    length assignment with a negative operand.

Semantics notes: `/` on two ints truncates toward zero and crashes on a
zero divisor; `&&`/`||` short-circuit; resizing a vector or bag truncates
on shrink and pads with the element shape's default on grow; `$= lap(w, e)`
draws from the continuous Laplace distribution centred at the value of `e`
(int or float) with scale `w` and always stores a float.

Commands must be expanded first: `Hinted` nodes execute their bodies and a
remaining `ExtInvoke` is a programming error, not a program crash.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional, Union

import numpy as np

from .syntax import (
    Assign,
    BinOp,
    Builtin,
    Cmd,
    Expr,
    ExtInvoke,
    Hinted,
    If,
    Index,
    IndexAssign,
    Laplace,
    Length,
    LengthAssign,
    Lit,
    Loc,
    Not,
    Seq,
    Skip,
    Var,
    While,
    seq_items,
)
from .values import BagShape, ProgramState, Shape, Value, VectorShape, default_value


# ============================================================
# Configuration and outcomes
# ============================================================


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    fuel: int = 10**6

    def __post_init__(self) -> None:
        if self.fuel < 1:
            raise ValueError("fuel must be at least 1")


@dataclass
class Final:
    state: ProgramState


@dataclass
class Diverged:
    pass


@dataclass
class Crashed:
    reason: str
    loc: Optional[Loc] = None


ExecOutcome = Union[Final, Diverged, Crashed]


class EvalError(Exception):
    """An expression evaluation error; exec_cmd reports it as Crashed."""

    def __init__(self, reason: str, loc: Optional[Loc] = None):
        self.reason = reason
        self.loc = loc
        super().__init__(reason)


class _DivergedSignal(Exception):
    pass


# ============================================================
# Expression evaluation
# ============================================================


def eval_expr(state: ProgramState, e: Expr) -> Value:
    """Evaluate an expression; raises EvalError on runtime partiality."""
    return _eval(state.store, e)


def _int_div(a: int, b: int) -> int:
    if b == 0:
        raise EvalError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _eval(store: dict[str, Value], e: Expr) -> Value:
    if isinstance(e, Var):
        return store[e.name]
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, BinOp):
        op = e.op
        a = _eval(store, e.lhs)
        if op == "&&":
            return bool(a) and bool(_eval(store, e.rhs))
        if op == "||":
            return bool(a) or bool(_eval(store, e.rhs))
        b = _eval(store, e.rhs)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if isinstance(a, int) and isinstance(b, int):
                return _int_div(a, b)
            if b == 0.0:
                raise EvalError("division by zero")
            return a / b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "==":
            return a == b
        raise TypeError(f"unknown operator {op!r}")
    if isinstance(e, Index):
        base = _eval(store, e.base)
        i = _eval(store, e.idx)
        if not 0 <= i < len(base):
            raise EvalError(f"index {i} out of bounds for length {len(base)}")
        return base[i]
    if isinstance(e, Length):
        return len(_eval(store, e.base))
    if isinstance(e, Not):
        return not _eval(store, e.operand)
    if isinstance(e, Builtin):
        return _eval_builtin(store, e)
    raise TypeError(f"eval: unknown expression {e!r}")


def _eval_builtin(store: dict[str, Value], e: Builtin) -> Value:
    name = e.name
    if name == "fc":
        return float(_eval(store, e.args[0]))
    if name == "clip":
        v = _eval(store, e.args[0])
        k = _eval(store, e.args[1])
        if v < -k:
            return -k
        if v > k:
            return k
        return v
    if name == "exp":
        try:
            return math.exp(_eval(store, e.args[0]))
        except OverflowError:
            raise EvalError("exp overflow") from None
    if name == "log":
        v = _eval(store, e.args[0])
        if v <= 0.0:
            raise EvalError(f"log of non-positive value {v}")
        return math.log(v)
    if name == "dot":
        u = _eval(store, e.args[0])
        w = _eval(store, e.args[1])
        if len(u) != len(w):
            raise EvalError(f"dot of vectors with lengths {len(u)} and {len(w)}")
        return float(sum(x * y for x, y in zip(u, w)))
    if name == "scale":
        s = _eval(store, e.args[0])
        u = _eval(store, e.args[1])
        return tuple(s * x for x in u)
    if name == "zeros":
        return (0.0,) * e.args[0].value
    if name == "emptybag":
        return ()
    raise TypeError(f"unknown builtin {name!r}")


# ============================================================
# Command execution
# ============================================================


def sample_laplace(center: float, width: float, rng: np.random.Generator) -> float:
    """One draw from the Laplace distribution with the given centre/scale."""
    return float(rng.laplace(center, width))


def exec_cmd(
    state: ProgramState,
    cmd: Cmd,
    cfg: RunConfig,
    rng: Optional[np.random.Generator] = None,
) -> ExecOutcome:
    """Run an expanded command on a copy of `state`.

    A fresh PCG64 generator is derived from cfg.seed unless `rng` is given
    (the statistical harness shares one generator across trials)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    store = dict(state.store)
    try:
        _exec(store, state.decls, cmd, cfg.fuel, rng)
    except _DivergedSignal:
        return Diverged()
    except EvalError as err:
        return Crashed(err.reason, err.loc)
    return Final(ProgramState(store, state.decls))


def _resize(v: tuple, n: int, elem_shape: Shape) -> tuple:
    if n < 0:
        raise _DivergedSignal()
    if n <= len(v):
        return v[:n]
    return v + (default_value(elem_shape),) * (n - len(v))


def _exec(
    store: dict[str, Value],
    decls,
    cmd: Cmd,
    fuel: int,
    rng: np.random.Generator,
) -> None:
    for stmt in seq_items(cmd):
        if isinstance(stmt, Assign):
            store[stmt.target] = _eval(store, stmt.expr)
        elif isinstance(stmt, IndexAssign):
            v = store[stmt.target]
            i = _eval(store, stmt.idx)
            if not 0 <= i < len(v):
                raise EvalError(
                    f"index {i} out of bounds for length {len(v)}", stmt.loc
                )
            store[stmt.target] = v[:i] + (_eval(store, stmt.expr),) + v[i + 1 :]
        elif isinstance(stmt, LengthAssign):
            n = _eval(store, stmt.expr)
            store[stmt.target] = _resize(
                store[stmt.target], n, decls[stmt.target].elem
            )
        elif isinstance(stmt, Laplace):
            center = _eval(store, stmt.center)
            store[stmt.target] = sample_laplace(float(center), stmt.width, rng)
        elif isinstance(stmt, If):
            if _eval(store, stmt.cond):
                _exec(store, decls, stmt.then_branch, fuel, rng)
            else:
                _exec(store, decls, stmt.else_branch, fuel, rng)
        elif isinstance(stmt, While):
            remaining = fuel
            while _eval(store, stmt.cond):
                if remaining == 0:
                    raise _DivergedSignal()
                remaining -= 1
                _exec(store, decls, stmt.body, fuel, rng)
        elif isinstance(stmt, Skip):
            pass
        elif isinstance(stmt, Hinted):
            _exec(store, decls, stmt.body, fuel, rng)
        elif isinstance(stmt, ExtInvoke):
            raise ValueError(
                f"cannot execute unexpanded extension {stmt.name!r}; run expand() first"
            )
        else:
            raise TypeError(f"exec: unknown command {stmt!r}")
