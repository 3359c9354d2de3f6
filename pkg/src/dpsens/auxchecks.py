"""Auxiliary judgments used by the extension typing rules.

Three program properties interact with those rules:

  * `check_determ` — the command contains no random assignment anywhere,
    so it denotes a deterministic function of the store.
  * `check_term` — a syntactic termination certificate.  Loops are never
    derivable; the extension forms are derivable when their bodies are
    (and `bsum` unconditionally), because their expansions only loop over
    finite values.  Index reads and index assignments are derivable: they
    are total up to crashing, and a crash is not divergence.
  * `check_linear` — a derivation that the command's effect on distances
    scales: if the input distances scale by k, output distances scale by
    at most k.  Its post-context reports the same sensitivities the plain
    checker would, but only commands built from scaling-compatible pieces
    are derivable.  The one non-scaling expression rule (`clip`'s constant
    cap) is replaced by its 1-Lipschitz bound here.

`check_linear` by default refuses to branch on a sensitive condition, as a
linear derivation needs both sides to trace the same path.  The vector-map
rule, which has already established the body is deterministic and
terminating, passes `tolerate_branching=True`; in that mode a sensitive
branch yields the sound coarse bound that everything the branch may write
becomes unboundedly sensitive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

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
    Not,
    Seq,
    Skip,
    Var,
    While,
    mvs,
    param_cmd,
    param_expr,
    seq_items,
)
from .values import INF_SENS, ZERO_SENS


@dataclass(frozen=True)
class AuxVerdict:
    ok: bool
    failing_premise: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def _ok() -> AuxVerdict:
    return AuxVerdict(True)


def _fail(why: str) -> AuxVerdict:
    return AuxVerdict(False, why)


# ============================================================
# Determinism
# ============================================================


def check_determ(c: Cmd) -> AuxVerdict:
    """No Laplace assignment occurs anywhere in the command."""
    stack = [c]
    while stack:
        n = stack.pop()
        if isinstance(n, Laplace):
            return _fail(f"random assignment to {n.target!r}")
        if isinstance(n, Seq):
            stack.append(n.first)
            stack.append(n.second)
        elif isinstance(n, If):
            stack.append(n.then_branch)
            stack.append(n.else_branch)
        elif isinstance(n, While):
            stack.append(n.body)
        elif isinstance(n, Hinted):
            stack.append(n.body)
        elif isinstance(n, ExtInvoke):
            for p in n.params:
                cp = param_cmd(p)
                if cp is not None:
                    stack.append(cp)
    return _ok()


# ============================================================
# Termination
# ============================================================


def _term_expr(e: Expr) -> AuxVerdict:
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, (Var, Lit)):
            continue
        if isinstance(n, BinOp):
            stack.append(n.lhs)
            stack.append(n.rhs)
        elif isinstance(n, Not):
            stack.append(n.operand)
        elif isinstance(n, Index):
            stack.append(n.base)
            stack.append(n.idx)
        elif isinstance(n, Length):
            stack.append(n.base)
        elif isinstance(n, Builtin):
            stack.extend(n.args)
        else:
            return _fail(f"no termination rule for expression {n!r}")
    return _ok()


def check_term(ctx, node) -> AuxVerdict:
    """Syntactic termination certificate for an expression or command.

    `ctx` is accepted for signature uniformity with the other judgments;
    the rules are purely syntactic."""
    if isinstance(node, Expr):
        return _term_expr(node)
    for stmt in seq_items(node):
        if isinstance(stmt, Skip):
            continue
        if isinstance(stmt, Assign):
            v = _term_expr(stmt.expr)
            if not v:
                return v
        elif isinstance(stmt, IndexAssign):
            for e in (stmt.idx, stmt.expr):
                v = _term_expr(e)
                if not v:
                    return v
        elif isinstance(stmt, If):
            for part in (stmt.cond, stmt.then_branch, stmt.else_branch):
                v = check_term(ctx, part)
                if not v:
                    return v
        elif isinstance(stmt, Hinted):
            v = _term_hinted(ctx, stmt)
            if not v:
                return v
        elif isinstance(stmt, While):
            return _fail("while loops have no termination rule")
        elif isinstance(stmt, Laplace):
            return _fail("random assignment has no termination rule")
        elif isinstance(stmt, LengthAssign):
            return _fail("length assignment has no termination rule")
        elif isinstance(stmt, ExtInvoke):
            return _fail(f"unexpanded extension {stmt.name!r}")
        else:
            return _fail(f"no termination rule for {type(stmt).__name__}")
    return _ok()


def _term_hinted(ctx, stmt: Hinted) -> AuxVerdict:
    h = stmt.hint
    if h.name == "bsum":
        return _ok()
    if h.name in ("bmap", "vmap", "repeat"):
        body = param_cmd(h.params[-1])
        if body is None:
            return _fail(f"{h.name}: final parameter is not a command")
        return check_term(ctx, body)
    if h.name == "partition":
        body = param_cmd(h.params[9])
        if body is None:
            return _fail("partition: final parameter is not a command")
        n_parts = param_expr(h.params[8])
        if n_parts is None:
            return _fail("partition: nParts is not an expression")
        v = _term_expr(n_parts)
        if not v:
            return v
        return check_term(ctx, body)
    return _fail(f"no termination rule for extension {h.name!r}")


# ============================================================
# Linearity
# ============================================================


def check_linear(ctx, c: Cmd, *, tolerate_branching: bool = False):
    """Derive `{ctx} c {ctx2, (0,0)} linear`; returns (ok, ctx2).

    On failure returns (False, None).  `tolerate_branching` additionally
    admits branching on sensitive conditions with the coarse post-context
    that sets everything the branch writes to infinity (sound only when
    determinism and termination of `c` are established separately, as the
    vector-map rule does before asking)."""
    from . import checker  # deferred: checker imports this module

    try:
        ctx2 = _linear_cmd(ctx, c, tolerate_branching, checker)
    except _NotLinear:
        return False, None
    return True, ctx2


class _NotLinear(Exception):
    pass


def _linear_cmd(ctx, c: Cmd, tolerate: bool, checker):
    for stmt in seq_items(c):
        if isinstance(stmt, Skip):
            continue
        if isinstance(stmt, Assign):
            s, _ = _linear_expr(ctx, stmt.expr, checker)
            ctx = ctx.set_sens(stmt.target, s)
        elif isinstance(stmt, IndexAssign):
            ctx = _linear_index_assign(ctx, stmt, checker)
        elif isinstance(stmt, LengthAssign):
            ctx = _linear_length_assign(ctx, stmt, checker)
        elif isinstance(stmt, If):
            g, _ = _linear_expr(ctx, stmt.cond, checker)
            if g == ZERO_SENS:
                ctx1 = _linear_cmd(ctx, stmt.then_branch, tolerate, checker)
                ctx2 = _linear_cmd(ctx, stmt.else_branch, tolerate, checker)
                ctx = ctx1.pointwise_max(ctx2)
            elif tolerate:
                if not check_determ(stmt):
                    raise _NotLinear()
                ctx = ctx.update_many({x: INF_SENS for x in mvs(stmt)})
            else:
                raise _NotLinear()
        elif isinstance(stmt, Hinted):
            ctx = _linear_hinted(ctx, stmt, checker)
        else:
            # while, laplace, unexpanded extensions: no linear rule
            raise _NotLinear()
    return ctx


def _linear_expr(ctx, e: Expr, checker):
    try:
        return checker.type_expr(ctx, e, mode=checker.Mode.TOLERANT, linear=True)
    except checker.CheckError:
        raise _NotLinear() from None


def _linear_index_assign(ctx, stmt: IndexAssign, checker):
    # Same shape split as the plain checker; every case scales.
    from .values import BagShape, VectorShape

    try:
        shape = ctx.shape(stmt.target)
    except KeyError:
        raise _NotLinear() from None
    ti, _ = _linear_expr(ctx, stmt.idx, checker)
    s, _ = _linear_expr(ctx, stmt.expr, checker)
    phi = ctx.sens(stmt.target)
    if isinstance(shape, VectorShape):
        if ti > ZERO_SENS or phi.is_inf:
            return ctx.set_sens(stmt.target, INF_SENS)
        return ctx.set_sens(stmt.target, phi + s)
    if isinstance(shape, BagShape):
        return ctx.set_sens(stmt.target, INF_SENS)
    raise _NotLinear()


def _linear_length_assign(ctx, stmt: LengthAssign, checker):
    from .values import BagShape, VectorShape

    try:
        shape = ctx.shape(stmt.target)
    except KeyError:
        raise _NotLinear() from None
    te, _ = _linear_expr(ctx, stmt.expr, checker)
    if isinstance(shape, VectorShape):
        if te > ZERO_SENS:
            return ctx.set_sens(stmt.target, INF_SENS)
        return ctx
    if isinstance(shape, BagShape):
        return ctx.set_sens(stmt.target, INF_SENS)
    raise _NotLinear()


def _linear_hinted(ctx, stmt: Hinted, checker):
    name = stmt.hint.name
    rule = checker.RULES.get(name)
    if rule is None or name in ("ac", "repeat"):
        raise _NotLinear()
    try:
        ctx2, cost, _ = rule(ctx, stmt, checker.Mode.TOLERANT, None)
    except checker.PremiseFailure:
        raise _NotLinear() from None
    if cost != checker.PrivacyCost.zero():
        raise _NotLinear()
    return ctx2


def weaken_linear(ctx2, ctx3) -> bool:
    """Whether a linear post-context ctx2 may be weakened to ctx3
    (pointwise no smaller on every variable)."""
    return ctx2.leq(ctx3)
