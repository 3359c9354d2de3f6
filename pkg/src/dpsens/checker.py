"""Static sensitivity and privacy-cost analysis.

The checker walks a fully expanded command and derives two things at once:

  * a *sensitivity context* mapping every declared variable to an upper
    bound on how far its value can drift between two executions started
    on adjacent inputs (adjacent = stores within the declared per-variable
    distances, e.g. bags differing in one row), and
  * an aggregate (epsilon, delta) *privacy cost* for the randomness the
    command spends along the way.

Noise statements pay `sensitivity / width` of epsilon and reset their
target's sensitivity to zero — that is the whole mechanism; everything
else is bookkeeping that keeps the sensitivities honest.

Two modes share the same rule set.  STRICT refuses any construct whose
bound would have to degrade to infinity through a fallback (indexing with
a data-dependent subscript, branching on sensitive data, dividing by a
data-dependent denominator); it is the mode programs are checked in.
TOLERANT instead records infinity and keeps going; the specialized
extension rules run their body analyses in this mode, since a scratch
variable drifting to infinity inside a loop body is expected and handled
by the rule's own conclusion.

Costs are kept as exact rationals wherever the arithmetic is rational
(noise widths, literal bounds, iteration counts); only the advanced
composition formula drops to float64, as it must for sqrt/exp/log.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .auxchecks import check_determ, check_linear, check_term
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
    ParsedProgram,
    Seq,
    Skip,
    Var,
    While,
    fvs,
    mvs,
    param_cmd,
    param_expr,
    param_literal,
    param_var,
    parse_program,
    seq_of,
    seq_items,
)
from .values import (
    BOOL,
    FLOAT,
    INT,
    BagShape,
    ExtReal,
    INF_SENS,
    ONE_SENS,
    Shape,
    VectorShape,
    ZERO_SENS,
    ext_max,
    is_numeric,
)

__all__ = [
    "CheckError",
    "ShapeError",
    "SensError",
    "Mode",
    "PrivacyCost",
    "TypingContext",
    "TypingReport",
    "type_expr",
    "type_cmd",
    "check_program",
    "compose_iterations",
    "RULES",
]


# ============================================================
# Errors
# ============================================================


class CheckError(Exception):
    """A program the analysis rejects."""

    def __init__(self, msg: str, loc: Optional[Loc] = None):
        self.msg = msg
        self.loc = loc
        super().__init__(f"{loc}: {msg}" if loc else msg)


class ShapeError(CheckError):
    """Value shapes do not fit together."""


class SensError(CheckError):
    """Shapes fit, but no finite/derivable sensitivity bound exists."""


class PremiseFailure(Exception):
    """Internal: a specialized extension rule does not apply.

    Raised by rule functions to hand the invocation back to the dispatcher,
    which then types the expanded body directly.  Never escapes `type_cmd`.
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class Mode(enum.Enum):
    STRICT = "strict"
    TOLERANT = "tolerant"


# ============================================================
# Privacy cost
# ============================================================

Number = Union[Fraction, float]


@dataclass(frozen=True)
class PrivacyCost:
    """(epsilon, delta), exact where possible, float64 where not."""

    epsilon: Number
    delta: Number

    @staticmethod
    def zero() -> "PrivacyCost":
        return PrivacyCost(Fraction(0), Fraction(0))

    def __add__(self, other: "PrivacyCost") -> "PrivacyCost":
        return PrivacyCost(self.epsilon + other.epsilon, self.delta + other.delta)

    def max_with(self, other: "PrivacyCost") -> "PrivacyCost":
        return PrivacyCost(
            max(self.epsilon, other.epsilon), max(self.delta, other.delta)
        )

    def to_json(self) -> dict:
        return {"epsilon": float(self.epsilon), "delta": float(self.delta)}

    def __str__(self) -> str:
        return f"(ε={float(self.epsilon):g}, δ={float(self.delta):g})"


_ZERO_COST = PrivacyCost.zero()


# ============================================================
# Typing context
# ============================================================


@dataclass(frozen=True)
class TypingContext:
    """Immutable map from variable to (shape, sensitivity).

    Shapes never change after declaration; all the update helpers touch
    only the sensitivity half and return a fresh context.
    """

    entries: Mapping[str, tuple[Shape, ExtReal]]

    @staticmethod
    def from_decls(
        decls: Mapping[str, Shape],
        sensitivities: Optional[Mapping[str, ExtReal]] = None,
    ) -> "TypingContext":
        sens = sensitivities or {}
        return TypingContext(
            {x: (sh, ExtReal.of(sens.get(x, ZERO_SENS))) for x, sh in decls.items()}
        )

    def vars(self) -> Iterable[str]:
        return self.entries.keys()

    def items(self) -> Iterable[tuple[str, tuple[Shape, ExtReal]]]:
        return self.entries.items()

    def __contains__(self, x: str) -> bool:
        return x in self.entries

    def shape(self, x: str) -> Shape:
        try:
            return self.entries[x][0]
        except KeyError:
            raise CheckError(f"undeclared variable {x!r}") from None

    def sens(self, x: str) -> ExtReal:
        try:
            return self.entries[x][1]
        except KeyError:
            raise CheckError(f"undeclared variable {x!r}") from None

    def set_sens(self, x: str, s: ExtReal) -> "TypingContext":
        sh = self.shape(x)
        d = dict(self.entries)
        d[x] = (sh, s)
        return TypingContext(d)

    def update_many(self, updates: Mapping[str, ExtReal]) -> "TypingContext":
        if not updates:
            return self
        d = dict(self.entries)
        for x, s in updates.items():
            d[x] = (self.shape(x), s)
        return TypingContext(d)

    def pointwise_max(self, other: "TypingContext") -> "TypingContext":
        return TypingContext(
            {
                x: (sh, ext_max(s, other.sens(x)))
                for x, (sh, s) in self.entries.items()
            }
        )

    def leq(self, other: "TypingContext") -> bool:
        """Pointwise no greater on every variable."""
        return all(s <= other.sens(x) for x, (_, s) in self.entries.items())

    def stretch(self) -> "TypingContext":
        """Zero stays zero; every positive bound (finite or not) becomes
        infinity.  Scaling a store pair by an arbitrary factor preserves
        exactly the zero-distance coordinates."""
        return TypingContext(
            {
                x: (sh, ZERO_SENS if s == ZERO_SENS else INF_SENS)
                for x, (sh, s) in self.entries.items()
            }
        )

    def to_json(self) -> dict:
        return {
            x: {"shape": str(sh), "sens": s.to_json()}
            for x, (sh, s) in sorted(self.entries.items())
        }


# ============================================================
# Expression sensitivities
# ============================================================


def _approx(*sens: ExtReal) -> ExtReal:
    """Zero when every input is zero-sensitive, otherwise unbounded."""
    return ZERO_SENS if all(s == ZERO_SENS for s in sens) else INF_SENS


def _lit_number(e: Expr) -> Optional[Union[int, float]]:
    if isinstance(e, Lit) and isinstance(e.value, (int, float)) and not isinstance(
        e.value, bool
    ):
        return e.value
    return None


def _lit_shape(v: Union[int, float, bool]) -> Shape:
    if isinstance(v, bool):
        return BOOL
    if isinstance(v, int):
        return INT
    return FLOAT


_ARITH_OPS = {"+", "-", "*", "/"}
_CMP_OPS = {"<", "<=", ">", ">=", "=="}
_LOGIC_OPS = {"&&", "||"}


def type_expr(
    ctx: TypingContext,
    e: Expr,
    *,
    mode: Mode = Mode.STRICT,
    linear: bool = False,
    expected: Optional[Shape] = None,
) -> tuple[ExtReal, Shape]:
    """Sensitivity and shape of an expression under `ctx`.

    `expected` is the shape the surrounding position demands, needed only
    to give `{}` (the empty bag, which has no intrinsic element type) a
    shape.  `linear=True` swaps the one constant-offset bound (`clip`'s
    cap) for its scaling-compatible counterpart; it is used by the
    linearity analysis and changes nothing else.
    """
    if isinstance(e, Var):
        return ctx.sens(e.name), ctx.shape(e.name)

    if isinstance(e, Lit):
        return ZERO_SENS, _lit_shape(e.value)

    if isinstance(e, BinOp):
        return _type_binop(ctx, e, mode, linear)

    if isinstance(e, Not):
        s, sh = type_expr(ctx, e.operand, mode=mode, linear=linear)
        if sh != BOOL:
            raise ShapeError(f"`!` needs a bool operand, got {sh}")
        return _approx(s), BOOL

    if isinstance(e, Index):
        return _type_index(ctx, e, mode, linear)

    if isinstance(e, Length):
        s, sh = type_expr(ctx, e.base, mode=mode, linear=linear)
        if isinstance(sh, VectorShape):
            return (ZERO_SENS if not s.is_inf else INF_SENS), INT
        if isinstance(sh, BagShape):
            return s, INT
        raise ShapeError(f"`.length` needs a vector or bag, got {sh}")

    if isinstance(e, Builtin):
        return _type_builtin(ctx, e, mode, linear, expected)

    raise CheckError(f"cannot analyse expression {e!r}")


def _type_binop(
    ctx: TypingContext, e: BinOp, mode: Mode, linear: bool
) -> tuple[ExtReal, Shape]:
    s1, sh1 = type_expr(ctx, e.lhs, mode=mode, linear=linear)
    s2, sh2 = type_expr(ctx, e.rhs, mode=mode, linear=linear)
    op = e.op

    if op in _ARITH_OPS:
        if sh1 != sh2 or not is_numeric(sh1):
            raise ShapeError(f"`{op}` needs two ints or two floats, got {sh1} and {sh2}")
        if op in ("+", "-"):
            return s1 + s2, sh1
        if op == "*":
            k = _lit_number(e.lhs)
            if k is not None:
                return ExtReal.of(abs(k)) * s2, sh1
            k = _lit_number(e.rhs)
            if k is not None:
                return ExtReal.of(abs(k)) * s1, sh1
            return _approx(s1, s2), sh1
        # division
        k = _lit_number(e.rhs)
        if k is not None:
            if k == 0:
                raise CheckError("division by the literal zero")
            scaled = s1.div_by(abs(Fraction(k)))
            if sh1 == INT and s1 > ZERO_SENS:
                # Integer division truncates toward zero, and the two
                # runs' quotients truncate independently: 1/2 and 2/2
                # land a full unit apart though the exact quotients
                # differ by only a half.  The misalignment never exceeds
                # one unit beyond the scaled distance.
                return scaled + ExtReal.of(1), sh1
            return scaled, sh1
        if mode is Mode.STRICT and s2 > ZERO_SENS:
            raise SensError(
                "dividing by a data-dependent denominator has no sensitivity bound"
            )
        return _approx(s1, s2), sh1

    if op in _CMP_OPS:
        if sh1 != sh2:
            raise ShapeError(f"`{op}` compares mismatched shapes {sh1} and {sh2}")
        if not is_numeric(sh1) and not (op == "==" and sh1 == BOOL):
            raise ShapeError(f"`{op}` cannot compare {sh1} values")
        return _approx(s1, s2), BOOL

    if op in _LOGIC_OPS:
        if sh1 != BOOL or sh2 != BOOL:
            raise ShapeError(f"`{op}` needs bool operands, got {sh1} and {sh2}")
        return _approx(s1, s2), BOOL

    raise CheckError(f"unknown operator {op!r}")


def _type_index(
    ctx: TypingContext, e: Index, mode: Mode, linear: bool
) -> tuple[ExtReal, Shape]:
    sb, shb = type_expr(ctx, e.base, mode=mode, linear=linear)
    si, shi = type_expr(ctx, e.idx, mode=mode, linear=linear)
    if shi != INT:
        raise ShapeError(f"subscript must be an int, got {shi}")
    if isinstance(shb, VectorShape):
        # The whole-vector distance (a sum over slots) bounds any one slot.
        if si > ZERO_SENS:
            if mode is Mode.STRICT:
                raise SensError("vector subscript depends on the data")
            return INF_SENS, shb.elem
        if sb.is_inf:
            if mode is Mode.STRICT:
                raise SensError("indexing into an unboundedly sensitive vector")
            return INF_SENS, shb.elem
        return sb, shb.elem
    if isinstance(shb, BagShape):
        # Bags carry no slot identity, so even adjacent bags may present
        # entirely different values at the same subscript.
        if mode is Mode.STRICT and (sb > ZERO_SENS or si > ZERO_SENS):
            raise SensError("subscripting a sensitive bag")
        return INF_SENS, shb.elem
    raise ShapeError(f"only vectors and bags can be subscripted, got {shb}")


def _type_builtin(
    ctx: TypingContext,
    e: Builtin,
    mode: Mode,
    linear: bool,
    expected: Optional[Shape],
) -> tuple[ExtReal, Shape]:
    name = e.name

    if name == "fc":
        (a,) = e.args
        s, sh = type_expr(ctx, a, mode=mode, linear=linear)
        if sh != INT:
            raise ShapeError(f"fc converts int to float, got {sh}")
        return s, FLOAT

    if name == "clip":
        arg, bound = e.args
        s, sh = type_expr(ctx, arg, mode=mode, linear=linear)
        if sh != FLOAT:
            raise ShapeError(f"clip applies to floats, got {sh}")
        k = _lit_number(bound)
        if k is None or k < 0:
            raise CheckError("clip bound must be a nonnegative numeric literal")
        if linear:
            # Clamping is 1-Lipschitz; the constant cap 2k is not a
            # scaling bound, so the linearity analysis may not use it.
            return s, FLOAT
        cap = ExtReal.of(2 * k)
        return (s if s <= cap else cap), FLOAT

    if name in ("exp", "log"):
        (a,) = e.args
        s, sh = type_expr(ctx, a, mode=mode, linear=linear)
        if sh != FLOAT:
            raise ShapeError(f"{name} applies to floats, got {sh}")
        return _approx(s), FLOAT

    if name == "dot":
        u, v = e.args
        su, shu = type_expr(ctx, u, mode=mode, linear=linear)
        sv, shv = type_expr(ctx, v, mode=mode, linear=linear)
        want = VectorShape(FLOAT)
        if shu != want or shv != want:
            raise ShapeError(f"dot needs two [float] operands, got {shu} and {shv}")
        return _approx(su, sv), FLOAT

    if name == "scale":
        k, v = e.args
        sk, shk = type_expr(ctx, k, mode=mode, linear=linear)
        sv, shv = type_expr(ctx, v, mode=mode, linear=linear)
        if shk != FLOAT or shv != VectorShape(FLOAT):
            raise ShapeError(f"scale needs (float, [float]), got {shk} and {shv}")
        return _approx(sk, sv), VectorShape(FLOAT)

    if name == "zeros":
        (n,) = e.args
        k = _lit_number(n)
        if not isinstance(k, int) or k < 0:
            raise CheckError("zeros[n] needs a nonnegative int literal")
        return ZERO_SENS, VectorShape(FLOAT)

    if name == "emptybag":
        if isinstance(expected, BagShape):
            return ZERO_SENS, expected
        raise ShapeError(
            "cannot determine the element type of {} in this position"
        )

    raise CheckError(f"unknown builtin {name!r}")


# ============================================================
# Command typing
# ============================================================


def type_cmd(
    ctx: TypingContext,
    c: Cmd,
    mode: Mode = Mode.STRICT,
    rule_log: Optional[list] = None,
) -> tuple[TypingContext, PrivacyCost, list]:
    """Thread `ctx` through `c`, returning the post-context, the total
    privacy cost, and a trace of where the cost arose."""
    cost = _ZERO_COST
    trace: list = []
    for stmt in seq_items(c):
        ctx, q, tr = _type_stmt(ctx, stmt, mode, rule_log)
        cost = cost + q
        trace.extend(tr)
    return ctx, cost, trace


def _type_stmt(
    ctx: TypingContext, stmt: Cmd, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    if isinstance(stmt, Skip):
        return ctx, _ZERO_COST, []

    if isinstance(stmt, Assign):
        target_shape = _target_shape(ctx, stmt.target, stmt.loc)
        s, sh = _expr_at(ctx, stmt.expr, mode, stmt.loc, expected=target_shape)
        if sh != target_shape:
            raise ShapeError(
                f"cannot assign {sh} to {stmt.target} : {target_shape}", stmt.loc
            )
        return ctx.set_sens(stmt.target, s), _ZERO_COST, []

    if isinstance(stmt, IndexAssign):
        return _type_index_assign(ctx, stmt, mode), _ZERO_COST, []

    if isinstance(stmt, LengthAssign):
        return _type_length_assign(ctx, stmt, mode), _ZERO_COST, []

    if isinstance(stmt, Laplace):
        return _type_laplace(ctx, stmt, mode)

    if isinstance(stmt, If):
        return _type_if(ctx, stmt, mode, rule_log)

    if isinstance(stmt, While):
        return _type_while(ctx, stmt, mode, rule_log)

    if isinstance(stmt, Hinted):
        return _type_hinted(ctx, stmt, mode, rule_log)

    if isinstance(stmt, ExtInvoke):
        raise CheckError(
            f"extension invocation {stmt.name!r} was not expanded; "
            "run the expander before the checker",
            stmt.loc,
        )

    raise CheckError(f"cannot analyse statement {type(stmt).__name__}")


def _target_shape(ctx: TypingContext, x: str, loc: Optional[Loc]) -> Shape:
    try:
        return ctx.shape(x)
    except CheckError:
        raise CheckError(f"undeclared variable {x!r}", loc) from None


def _expr_at(
    ctx: TypingContext,
    e: Expr,
    mode: Mode,
    loc: Optional[Loc],
    expected: Optional[Shape] = None,
) -> tuple[ExtReal, Shape]:
    """type_expr, pinning the statement location onto location-less errors."""
    try:
        return type_expr(ctx, e, mode=mode, expected=expected)
    except CheckError as err:
        if err.loc is None:
            raise type(err)(err.msg, loc) from None
        raise


def _type_index_assign(ctx: TypingContext, stmt: IndexAssign, mode: Mode) -> TypingContext:
    shape = _target_shape(ctx, stmt.target, stmt.loc)
    si, shi = _expr_at(ctx, stmt.idx, mode, stmt.loc)
    if shi != INT:
        raise ShapeError(f"subscript must be an int, got {shi}", stmt.loc)
    if isinstance(shape, VectorShape):
        s, sh = _expr_at(ctx, stmt.expr, mode, stmt.loc, expected=shape.elem)
        if sh != shape.elem:
            raise ShapeError(
                f"cannot store {sh} into a slot of {stmt.target} : {shape}", stmt.loc
            )
        phi = ctx.sens(stmt.target)
        if si > ZERO_SENS:
            if mode is Mode.STRICT:
                raise SensError(
                    "updating a vector at a data-dependent subscript", stmt.loc
                )
            return ctx.set_sens(stmt.target, INF_SENS)
        if phi.is_inf:
            if mode is Mode.STRICT:
                raise SensError(
                    f"updating {stmt.target!r}, whose sensitivity is already "
                    "unbounded",
                    stmt.loc,
                )
            return ctx.set_sens(stmt.target, INF_SENS)
        # One slot moves by at most the incoming value's drift, on top of
        # whatever the whole vector already carried.
        return ctx.set_sens(stmt.target, phi + s)
    if isinstance(shape, BagShape):
        s, sh = _expr_at(ctx, stmt.expr, mode, stmt.loc, expected=shape.elem)
        if sh != shape.elem:
            raise ShapeError(
                f"cannot store {sh} into a slot of {stmt.target} : {shape}", stmt.loc
            )
        if mode is Mode.STRICT:
            raise SensError(
                "updating a bag at a subscript has no sensitivity bound "
                "(bag slots carry no identity)",
                stmt.loc,
            )
        return ctx.set_sens(stmt.target, INF_SENS)
    raise ShapeError(f"only vectors and bags can be subscripted, got {shape}", stmt.loc)


def _type_length_assign(ctx: TypingContext, stmt: LengthAssign, mode: Mode) -> TypingContext:
    shape = _target_shape(ctx, stmt.target, stmt.loc)
    se, she = _expr_at(ctx, stmt.expr, mode, stmt.loc)
    if she != INT:
        raise ShapeError(f"length must be an int, got {she}", stmt.loc)
    if isinstance(shape, VectorShape):
        if se > ZERO_SENS:
            if mode is Mode.STRICT:
                raise SensError("resizing a vector to a data-dependent length", stmt.loc)
            return ctx.set_sens(stmt.target, INF_SENS)
        # Both runs truncate/pad identically: truncation can only discard
        # distance, padding adds equal slots.
        return ctx
    if isinstance(shape, BagShape):
        if se > ZERO_SENS and mode is Mode.STRICT:
            raise SensError("resizing a bag to a data-dependent length", stmt.loc)
        # Which rows survive a bag truncation is unspecified, so no bound
        # survives either.
        return ctx.set_sens(stmt.target, INF_SENS)
    raise ShapeError(f"only vectors and bags have assignable length, got {shape}", stmt.loc)


def _type_laplace(
    ctx: TypingContext, stmt: Laplace, mode: Mode
) -> tuple[TypingContext, PrivacyCost, list]:
    target_shape = _target_shape(ctx, stmt.target, stmt.loc)
    if target_shape != FLOAT:
        raise ShapeError(
            f"noise target {stmt.target!r} must be a float, got {target_shape}",
            stmt.loc,
        )
    s, sh = _expr_at(ctx, stmt.center, mode, stmt.loc)
    if sh not in (INT, FLOAT):
        raise ShapeError(f"noise centre must be numeric, got {sh}", stmt.loc)
    if s.is_inf:
        raise SensError(
            "cannot calibrate noise to an expression of unbounded sensitivity",
            stmt.loc,
        )
    eps = s.div_by(Fraction(stmt.width))
    cost = PrivacyCost(eps.frac, Fraction(0))
    entry = {
        "kind": "laplace",
        "target": stmt.target,
        "epsilon": float(eps.frac),
        "delta": 0.0,
        "location": str(stmt.loc) if stmt.loc else None,
    }
    return ctx.set_sens(stmt.target, ZERO_SENS), cost, [entry]


def _type_if(
    ctx: TypingContext, stmt: If, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    g, gsh = _expr_at(ctx, stmt.cond, mode, stmt.loc)
    if gsh != BOOL:
        raise ShapeError(f"branch condition must be a bool, got {gsh}", stmt.loc)

    if g == ZERO_SENS:
        ctx1, q1, tr1 = type_cmd(ctx, stmt.then_branch, mode, rule_log)
        ctx2, q2, tr2 = type_cmd(ctx, stmt.else_branch, mode, rule_log)
        trace = []
        if tr1 or tr2:
            trace.append(
                {
                    "kind": "if",
                    "location": str(stmt.loc) if stmt.loc else None,
                    "then": tr1,
                    "else": tr2,
                }
            )
        # Exactly one branch runs, and the condition agrees across runs,
        # so the worse branch bounds both cost and drift.
        return ctx1.pointwise_max(ctx2), q1.max_with(q2), trace

    if mode is Mode.STRICT:
        raise SensError("branching on a data-dependent condition", stmt.loc)

    verdict = check_determ(stmt)
    if not verdict:
        raise SensError(
            "branching on a data-dependent condition with a randomized branch "
            f"({verdict.failing_premise})",
            stmt.loc,
        )
    # The two runs may take different branches; everything either branch
    # can write loses its bound.  Branches are still walked for shape
    # errors, with the results discarded.
    type_cmd(ctx, stmt.then_branch, Mode.TOLERANT, None)
    type_cmd(ctx, stmt.else_branch, Mode.TOLERANT, None)
    written = sorted(mvs(stmt))
    entry = {
        "kind": "if",
        "location": str(stmt.loc) if stmt.loc else None,
        "sensitive_condition": True,
        "unbounded": written,
    }
    return ctx.update_many({x: INF_SENS for x in written}), _ZERO_COST, [entry]


def _sensitive_loop(
    ctx: TypingContext, stmt: While, mode: Mode
) -> tuple[TypingContext, PrivacyCost, list]:
    if mode is Mode.STRICT:
        raise SensError("looping on a data-dependent condition", stmt.loc)
    verdict = check_determ(stmt.body)
    if not verdict:
        raise SensError(
            "looping on a data-dependent condition with a randomized body "
            f"({verdict.failing_premise})",
            stmt.loc,
        )
    type_cmd(ctx, stmt.body, Mode.TOLERANT, None)  # shape coverage only
    written = sorted(mvs(stmt))
    entry = {
        "kind": "while",
        "location": str(stmt.loc) if stmt.loc else None,
        "sensitive_condition": True,
        "unbounded": written,
    }
    return ctx.update_many({x: INF_SENS for x in written}), _ZERO_COST, [entry]


def _type_while(
    ctx: TypingContext, stmt: While, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    g, gsh = _expr_at(ctx, stmt.cond, mode, stmt.loc)
    if gsh != BOOL:
        raise ShapeError(f"loop condition must be a bool, got {gsh}", stmt.loc)
    if g > ZERO_SENS:
        return _sensitive_loop(ctx, stmt, mode)

    inv, widened, scratch = _loop_invariant(
        ctx, stmt.body, mode, rule_log, allow_cost=False, loc=stmt.loc
    )

    # Widening may have made the condition data-dependent after all.
    g2, _ = _expr_at(inv, stmt.cond, mode, stmt.loc)
    if g2 > ZERO_SENS:
        return _sensitive_loop(ctx, stmt, mode)

    if rule_log is not None and scratch:
        rule_log.extend(scratch)
    trace = []
    if widened:
        trace.append(
            {
                "kind": "while",
                "location": str(stmt.loc) if stmt.loc else None,
                "widened": sorted(widened),
            }
        )
    return inv, _ZERO_COST, trace


def _loop_invariant(
    ctx: TypingContext,
    body: Cmd,
    mode: Mode,
    rule_log: Optional[list],
    *,
    allow_cost: bool,
    loc: Optional[Loc],
) -> tuple[TypingContext, set[str], list]:
    """Find Γ ≥ ctx with {Γ} body {Γ' ≤ Γ} by widening drifting variables
    to infinity until the body's effect stays put.

    Returns (invariant, widened variable set, rule-log entries from the
    final, successful body pass).  With `allow_cost=False` a body that
    spends privacy budget is an error — an unbounded loop cannot pay a
    per-iteration price.
    """
    inv = ctx
    widened: set[str] = set()
    while True:
        scratch: Optional[list] = [] if rule_log is not None else None
        ctx1, q1, _ = type_cmd(inv, body, mode, scratch)
        if not allow_cost and q1 != _ZERO_COST:
            raise SensError(
                "a loop without an iteration bound cannot spend privacy budget",
                loc,
            )
        if ctx1.leq(inv):
            return inv, widened, (scratch or [])
        grew = {x for x in inv.vars() if ctx1.sens(x) > inv.sens(x)}
        widened |= grew
        inv = inv.update_many({x: INF_SENS for x in grew})


# ============================================================
# Specialized extension rules
# ============================================================


def _rule_var(ctx: TypingContext, p, what: str) -> str:
    x = param_var(p)
    if x is None:
        raise PremiseFailure(f"{what} must be a plain variable")
    if x not in ctx:
        raise PremiseFailure(f"{what} {x!r} is not declared")
    return x


def _rule_distinct(names: Iterable[str]) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise PremiseFailure(f"variable {n!r} plays two roles in the invocation")
        seen.add(n)


def _rule_body(p) -> Cmd:
    c = param_cmd(p)
    if c is None:
        raise PremiseFailure("final parameter must be a statement block")
    return c


def _capture_free(c: Cmd, names: Iterable[str]) -> None:
    written = mvs(c)
    for n in names:
        if n in written:
            raise PremiseFailure(f"body must not write {n!r}")


def _typed_judgment(ctx: TypingContext, c: Cmd) -> TypingContext:
    try:
        out, _, _ = type_cmd(ctx, c, Mode.TOLERANT, None)
    except CheckError as err:
        raise PremiseFailure(f"body analysis failed: {err}") from None
    return out


def _map_judgments(
    ctx: TypingContext, c: Cmd, t_in: str, t_out: str, sigma: dict
) -> None:
    """The two dependency runs behind every per-element rule.

    Fixed element: with t_in pinned to zero and all loop-varying state
    unbounded, the body must reproduce t_out exactly (sensitivity zero) —
    i.e. t_out is a function of the element alone.  Arbitrary element:
    with t_in unbounded, nothing the body writes except t_out may retain
    any dependence on it.
    """
    base = ctx.set_sens(t_in, ZERO_SENS).stretch().update_many(sigma)
    out1 = _typed_judgment(base, c)
    if out1.sens(t_out) != ZERO_SENS:
        raise PremiseFailure(
            f"{t_out!r} is not a function of {t_in!r} alone "
            "(it stays sensitive even for a fixed element)"
        )
    out2 = _typed_judgment(base.set_sens(t_in, INF_SENS), c)
    leaks = sorted(
        x for x in mvs(c) if x != t_out and out2.sens(x) > ZERO_SENS
    )
    if leaks:
        raise PremiseFailure(f"element data leaks into {leaks[0]!r}")


def _loc_str(stmt: Hinted) -> Optional[str]:
    return str(stmt.hint.loc) if stmt.hint.loc else None


def rule_bag_map(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Per-element transformation of a bag: `bmap(in, out, t_in, i, t_out, c)`.

    A one-row difference between input bags maps to a one-row difference
    between output bags, so `out` inherits `in`'s sensitivity outright —
    provided `c` is a deterministic, terminating function of `t_in` alone.
    """
    p = stmt.hint.params
    in_v = _rule_var(ctx, p[0], "map source")
    out_v = _rule_var(ctx, p[1], "map target")
    t_in = _rule_var(ctx, p[2], "element variable")
    i_v = _rule_var(ctx, p[3], "counter")
    t_out = _rule_var(ctx, p[4], "result variable")
    c = _rule_body(p[5])
    _rule_distinct([in_v, out_v, t_in, i_v, t_out])

    in_shape = ctx.shape(in_v)
    out_shape = ctx.shape(out_v)
    if not isinstance(in_shape, BagShape) or not isinstance(out_shape, BagShape):
        raise PremiseFailure("map source and target must both be bags")
    if ctx.shape(t_in) != in_shape.elem or ctx.shape(t_out) != out_shape.elem:
        raise PremiseFailure("element/result variables do not match the bag shapes")
    if ctx.shape(i_v) != INT:
        raise PremiseFailure("counter must be an int")

    v = check_term(ctx, c)
    if not v:
        raise PremiseFailure(f"body termination not derivable: {v.failing_premise}")
    v = check_determ(c)
    if not v:
        raise PremiseFailure(f"body must be deterministic: {v.failing_premise}")
    _capture_free(c, [t_in, in_v, out_v, i_v])

    sigma = {x: INF_SENS for x in mvs(c)}
    sigma.update({i_v: INF_SENS, in_v: INF_SENS, out_v: INF_SENS})
    _map_judgments(ctx, c, t_in, t_out, sigma)

    sigma_post = {x: INF_SENS for x in mvs(c)}
    sigma_post.update({i_v: INF_SENS, t_in: INF_SENS, t_out: INF_SENS})
    ctx2 = ctx.set_sens(out_v, ctx.sens(in_v)).update_many(sigma_post)
    entry = {
        "kind": "extension",
        "name": "bmap",
        "location": _loc_str(stmt),
        "result": {out_v: ctx.sens(in_v).to_json()},
    }
    return ctx2, _ZERO_COST, [entry]


def rule_vector_map(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Per-slot transformation of a vector: `vmap(in, out, t_in, i, t_out, c)`.

    Vector distance is a sum over slots, so beyond the bag-map premises the
    body must transform distances *linearly*: if slot values move by d, the
    result moves by at most factor·d.  Then `out` costs factor times `in`.
    """
    p = stmt.hint.params
    in_v = _rule_var(ctx, p[0], "map source")
    out_v = _rule_var(ctx, p[1], "map target")
    t_in = _rule_var(ctx, p[2], "element variable")
    i_v = _rule_var(ctx, p[3], "counter")
    t_out = _rule_var(ctx, p[4], "result variable")
    c = _rule_body(p[5])
    _rule_distinct([in_v, out_v, t_in, i_v, t_out])

    in_shape = ctx.shape(in_v)
    out_shape = ctx.shape(out_v)
    if not isinstance(in_shape, VectorShape) or not isinstance(out_shape, VectorShape):
        raise PremiseFailure("map source and target must both be vectors")
    if ctx.shape(t_in) != in_shape.elem or ctx.shape(t_out) != out_shape.elem:
        raise PremiseFailure("element/result variables do not match the vector shapes")
    if ctx.shape(i_v) != INT:
        raise PremiseFailure("counter must be an int")

    v = check_term(ctx, c)
    if not v:
        raise PremiseFailure(f"body termination not derivable: {v.failing_premise}")
    v = check_determ(c)
    if not v:
        raise PremiseFailure(f"body must be deterministic: {v.failing_premise}")
    _capture_free(c, [t_in, in_v, out_v, i_v])

    sigma = {x: INF_SENS for x in mvs(c)}
    sigma.update({i_v: INF_SENS, in_v: INF_SENS, out_v: INF_SENS})
    _map_judgments(ctx, c, t_in, t_out, sigma)

    lin_base = ctx.set_sens(t_in, ONE_SENS).update_many(sigma)
    ok, lin_out = check_linear(lin_base, c, tolerate_branching=True)
    if not ok:
        raise PremiseFailure("body does not transform distances linearly")
    factor = lin_out.sens(t_out)

    sigma_post = {x: INF_SENS for x in mvs(c)}
    sigma_post.update({i_v: INF_SENS, t_in: INF_SENS, t_out: INF_SENS})
    out_sens = ctx.sens(in_v) * factor
    ctx2 = ctx.set_sens(out_v, out_sens).update_many(sigma_post)
    entry = {
        "kind": "extension",
        "name": "vmap",
        "location": _loc_str(stmt),
        "factor": factor.to_json(),
        "result": {out_v: out_sens.to_json()},
    }
    return ctx2, _ZERO_COST, [entry]


def rule_partition(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Split a bag into a vector of disjoint groups:
    `partition(in, out, t_in, i, t_out, t_idx, out_idx, t_part, nParts, c)`.

    Each row lands in at most one group, chosen by a deterministic function
    of the row itself, so moving one row moves at most one row per group:
    the vector-of-bags output inherits `in`'s sensitivity.
    """
    p = stmt.hint.params
    in_v = _rule_var(ctx, p[0], "partition source")
    out_v = _rule_var(ctx, p[1], "partition target")
    t_in = _rule_var(ctx, p[2], "element variable")
    i_v = _rule_var(ctx, p[3], "counter")
    t_out = _rule_var(ctx, p[4], "group-index result")
    t_idx = _rule_var(ctx, p[5], "scatter scratch")
    out_idx = _rule_var(ctx, p[6], "index bag")
    t_part = _rule_var(ctx, p[7], "group scratch")
    n_parts = param_expr(p[8])
    c = _rule_body(p[9])
    if n_parts is None:
        raise PremiseFailure("group count must be an expression")
    _rule_distinct([in_v, out_v, t_in, i_v, t_out, t_idx, out_idx, t_part])

    in_shape = ctx.shape(in_v)
    if not isinstance(in_shape, BagShape):
        raise PremiseFailure("partition source must be a bag")
    if ctx.shape(out_v) != VectorShape(BagShape(in_shape.elem)):
        raise PremiseFailure(
            "partition target must be a vector of bags of the source's elements"
        )
    if ctx.shape(t_in) != in_shape.elem:
        raise PremiseFailure("element variable does not match the bag shape")
    if ctx.shape(t_out) != INT or ctx.shape(t_idx) != INT or ctx.shape(i_v) != INT:
        raise PremiseFailure("group indices and counter must be ints")
    if ctx.shape(out_idx) != BagShape(INT):
        raise PremiseFailure("index bag must be a bag of ints")
    if ctx.shape(t_part) != BagShape(in_shape.elem):
        raise PremiseFailure("group scratch must match the source bag's shape")

    v = check_term(ctx, c)
    if not v:
        raise PremiseFailure(f"body termination not derivable: {v.failing_premise}")
    v = check_term(ctx, n_parts)
    if not v:
        raise PremiseFailure(f"group count termination not derivable: {v.failing_premise}")
    v = check_determ(c)
    if not v:
        raise PremiseFailure(f"body must be deterministic: {v.failing_premise}")
    _capture_free(c, [t_in, in_v, out_v, i_v, out_idx])

    try:
        s_n, sh_n = type_expr(ctx, n_parts, mode=Mode.TOLERANT)
    except CheckError as err:
        raise PremiseFailure(f"group count analysis failed: {err}") from None
    if sh_n != INT:
        raise PremiseFailure("group count must be an int")
    if s_n != ZERO_SENS:
        raise PremiseFailure("group count must not depend on the data")
    n_free = fvs(n_parts)
    if n_free & mvs(c):
        raise PremiseFailure("body must not write variables the group count reads")
    if n_free & {i_v, t_in, t_idx, out_idx, t_part}:
        raise PremiseFailure("group count must not read the scratch variables")

    sigma = {x: INF_SENS for x in mvs(c)}
    sigma.update({i_v: INF_SENS, in_v: INF_SENS, out_idx: INF_SENS})
    _map_judgments(ctx, c, t_in, t_out, sigma)

    sigma_post = {x: INF_SENS for x in mvs(c)}
    sigma_post.update(
        {
            i_v: INF_SENS,
            t_in: INF_SENS,
            t_idx: INF_SENS,
            out_idx: INF_SENS,
            t_part: INF_SENS,
        }
    )
    ctx2 = ctx.set_sens(out_v, ctx.sens(in_v)).update_many(sigma_post)
    entry = {
        "kind": "extension",
        "name": "partition",
        "location": _loc_str(stmt),
        "result": {out_v: ctx.sens(in_v).to_json()},
    }
    return ctx2, _ZERO_COST, [entry]


def rule_bag_sum(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Clipped sum of a float bag: `bsum(in, out, idx, t_in, bound)`.

    Every row contributes at most `bound` in magnitude, so swapping one
    row moves the total by at most 2·bound — and adding or removing one by
    at most bound.  `out` costs the bag's sensitivity times the bound.
    """
    p = stmt.hint.params
    in_v = _rule_var(ctx, p[0], "sum source")
    out_v = _rule_var(ctx, p[1], "sum target")
    idx_v = _rule_var(ctx, p[2], "counter")
    t_in = _rule_var(ctx, p[3], "element variable")
    bound = param_literal(p[4])
    _rule_distinct([in_v, out_v, idx_v, t_in])
    if bound is None or isinstance(bound, bool) or bound < 0:
        raise PremiseFailure("bound must be a nonnegative numeric literal")

    if ctx.shape(in_v) != BagShape(FLOAT):
        raise PremiseFailure("sum source must be a bag of floats")
    if ctx.shape(out_v) != FLOAT:
        raise PremiseFailure("sum target must be a float")
    if ctx.shape(idx_v) != INT:
        raise PremiseFailure("counter must be an int")
    if ctx.shape(t_in) != FLOAT:
        raise PremiseFailure("element variable must be a float")

    out_sens = ctx.sens(in_v) * ExtReal.of(bound)
    ctx2 = ctx.set_sens(out_v, out_sens).update_many(
        {idx_v: INF_SENS, t_in: INF_SENS}
    )
    entry = {
        "kind": "extension",
        "name": "bsum",
        "location": _loc_str(stmt),
        "result": {out_v: out_sens.to_json()},
    }
    return ctx2, _ZERO_COST, [entry]


def compose_iterations(
    per_pass: PrivacyCost, n: int, omega: float
) -> tuple[PrivacyCost, str]:
    """Price n iterations of a block costing `per_pass` each.

    Returns the cheaper of plain summation n·(ε, δ) — kept in exact
    rationals — and the square-root composition
    (ε·sqrt(2n·ln(1/ω)) + n·ε·(e^ε − 1), n·δ + ω), labelled "simple" or
    "advanced".  The advanced price is preferred unless it loses on both
    coordinates.
    """
    simple = PrivacyCost(n * per_pass.epsilon, n * per_pass.delta)
    eps_f = float(per_pass.epsilon)
    adv_eps = eps_f * math.sqrt(2.0 * n * math.log(1.0 / omega)) + n * eps_f * (
        math.exp(eps_f) - 1.0
    )
    adv_delta = n * float(per_pass.delta) + omega
    if adv_eps > float(simple.epsilon) and adv_delta > float(simple.delta):
        return simple, "simple"
    return PrivacyCost(adv_eps, adv_delta), "advanced"


def rule_adv_comp(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Repeat a randomized block n times under the better of two
    composition prices: `ac(i, n, omega, c)`.

    A block whose single pass costs (ε, δ) from a context it also restores
    can be run n times for either n·(ε, δ) (plain summation) or
    (ε·sqrt(2n·ln(1/ω)) + n·ε·(e^ε − 1), n·δ + ω) — the latter buys a
    sqrt(n) epsilon at a chosen extra failure mass ω.  The cheaper price
    per coordinate is charged.
    """
    p = stmt.hint.params
    i_v = _rule_var(ctx, p[0], "counter")
    n = param_literal(p[1])
    omega = param_literal(p[2])
    c = _rule_body(p[3])
    if not isinstance(n, int) or isinstance(n, bool) or n <= 0:
        raise PremiseFailure("iteration count must be a positive int literal")
    if (
        omega is None
        or isinstance(omega, bool)
        or not isinstance(omega, (int, float))
        or not (0 < omega <= 1)
    ):
        raise PremiseFailure("omega must be a numeric literal in (0, 1]")
    if ctx.shape(i_v) != INT:
        raise PremiseFailure("counter must be an int")
    if i_v in mvs(c):
        raise PremiseFailure("body must not write the counter")

    try:
        inv, widened, scratch = _loop_invariant(
            ctx, c, mode, rule_log, allow_cost=True, loc=stmt.hint.loc
        )
        _, per_pass, _ = type_cmd(inv, c, mode, None)
    except CheckError as err:
        raise PremiseFailure(f"body analysis failed: {err}") from None
    if rule_log is not None and scratch:
        rule_log.extend(scratch)

    chosen, which = compose_iterations(per_pass, n, float(omega))

    entry = {
        "kind": "extension",
        "name": "ac",
        "location": _loc_str(stmt),
        "iterations": n,
        "omega": float(omega),
        "per_pass": per_pass.to_json(),
        "composition": which,
        "epsilon": float(chosen.epsilon),
        "delta": float(chosen.delta),
        "widened": sorted(widened),
    }
    return inv, chosen, [entry]


def rule_repeat(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    """Run a block a literal number of times: `repeat(i, n, c)`.

    With the count known statically the block is simply typed n times in
    sequence, costs summing — each pass sees the context the previous one
    produced, so nothing is widened.
    """
    p = stmt.hint.params
    i_v = _rule_var(ctx, p[0], "counter")
    n = param_literal(p[1])
    c = _rule_body(p[2])
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise PremiseFailure("iteration count must be a positive int literal")
    if ctx.shape(i_v) != INT:
        raise PremiseFailure("counter must be an int")
    if i_v in mvs(c):
        raise PremiseFailure("body must not write the counter")

    bump = Assign(i_v, BinOp("+", Var(i_v), Lit(1)))
    steps: list[Cmd] = [Assign(i_v, Lit(0))]
    for _ in range(n):
        steps.append(c)
        steps.append(bump)
    unrolled = seq_of(steps)
    ctx2, cost, body_trace = type_cmd(ctx, unrolled, mode, rule_log)
    entry = {
        "kind": "extension",
        "name": "repeat",
        "location": _loc_str(stmt),
        "iterations": n,
        "cost": cost.to_json(),
        "body": body_trace,
    }
    return ctx2, cost, [entry]


RULES = {
    "bmap": rule_bag_map,
    "vmap": rule_vector_map,
    "partition": rule_partition,
    "bsum": rule_bag_sum,
    "ac": rule_adv_comp,
    "repeat": rule_repeat,
}


def _type_hinted(
    ctx: TypingContext, stmt: Hinted, mode: Mode, rule_log: Optional[list]
) -> tuple[TypingContext, PrivacyCost, list]:
    name = stmt.hint.name
    rule = RULES.get(name)
    if rule is not None:
        try:
            ctx2, cost, trace = rule(ctx, stmt, mode, rule_log)
        except PremiseFailure as pf:
            return _fallback(ctx, stmt, mode, rule_log, pf.reason)
        if rule_log is not None:
            rule_log.append(
                {
                    "extension": name,
                    "location": _loc_str(stmt),
                    "outcome": "applied",
                }
            )
        return ctx2, cost, trace
    return _fallback(ctx, stmt, mode, rule_log, "no specialized rule")


def _fallback(
    ctx: TypingContext,
    stmt: Hinted,
    mode: Mode,
    rule_log: Optional[list],
    reason: str,
) -> tuple[TypingContext, PrivacyCost, list]:
    """Type the expanded body directly when the specialized rule's
    premises do not hold."""
    if rule_log is not None:
        rule_log.append(
            {
                "extension": stmt.hint.name,
                "location": _loc_str(stmt),
                "outcome": "fallback",
                "reason": reason,
            }
        )
    ctx2, cost, body_trace = type_cmd(ctx, stmt.body, mode, rule_log)
    trace = []
    if body_trace:
        trace.append(
            {
                "kind": "fallback",
                "name": stmt.hint.name,
                "location": _loc_str(stmt),
                "reason": reason,
                "body": body_trace,
            }
        )
    return ctx2, cost, trace


# ============================================================
# Whole-program entry point
# ============================================================


@dataclass
class TypingReport:
    """Everything the analysis derived about one program."""

    program: ParsedProgram
    expanded: Cmd
    initial: TypingContext
    context: TypingContext
    cost: PrivacyCost
    trace: list
    rule_log: list
    warnings: list[str] = field(default_factory=list)

    @property
    def epsilon(self) -> float:
        return float(self.cost.epsilon)

    @property
    def delta(self) -> float:
        return float(self.cost.delta)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "context": self.context.to_json(),
            "trace": self.trace,
            "extensions": self.rule_log,
            "fallbacks": [
                e for e in self.rule_log if e.get("outcome") == "fallback"
            ],
            "warnings": list(self.warnings),
        }


def _collapse_log(entries: list) -> list:
    """Merge identical log entries (unrolled loops re-analyse the same
    invocation many times) into one entry with a count, keeping first-seen
    order."""
    out: list = []
    index: dict = {}
    for e in entries:
        key = tuple(sorted(e.items()))
        if key in index:
            index[key]["count"] = index[key].get("count", 1) + 1
        else:
            d = dict(e)
            index[key] = d
            out.append(d)
    return out


def check_program(source: str) -> TypingReport:
    """Parse, expand, and analyse a whole program."""
    from .expander import ExtensionRegistry, expand

    program = parse_program(source)
    registry = ExtensionRegistry.default().with_definitions(program.extensions)
    warnings: list[str] = []
    expanded = expand(program.command, registry, warnings)
    initial = TypingContext.from_decls(program.decls, program.sensitivities)
    rule_log: list = []
    context, cost, trace = type_cmd(initial, expanded, Mode.STRICT, rule_log)
    return TypingReport(
        program=program,
        expanded=expanded,
        initial=initial,
        context=context,
        cost=cost,
        trace=trace,
        rule_log=_collapse_log(rule_log),
        warnings=warnings,
    )
