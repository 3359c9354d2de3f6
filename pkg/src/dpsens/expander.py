"""Extension expansion: rewriting named command templates into core code.

An extension invocation `bmap(db, out, t, i, o, c...)` is replaced by the
extension's template with formal parameters substituted by the actual
parameters.  The result is wrapped in a `Hinted` node recording the
invocation, so the checker can first try a specialized typing rule for the
extension and only fall back to typing the expanded code when the rule's
premises fail.  Interpretation ignores hints entirely.

Substitution is kind-checked:

  * a formal used as an assignment target must be bound to a variable;
  * a formal used inside an expression may be bound to a variable, literal,
    or expression, but not a command;
  * a formal invoked bare (`c;`) must be bound to a command, which is
    spliced in place;
  * a formal appearing in a nested invocation's parameter list passes its
    actual through unchanged, whatever its kind.

Actual command parameters are expanded before substitution and templates
are expanded after it, so the output contains no `ExtInvoke` nodes and the
hint's parameters reference the very nodes embedded in the expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .syntax import (
    Assign,
    BinOp,
    Builtin,
    Cmd,
    CmdParam,
    ExpansionHint,
    Expr,
    ExprParam,
    ExtensionDefinition,
    ExtInvoke,
    Hinted,
    If,
    Index,
    IndexAssign,
    Laplace,
    Length,
    LengthAssign,
    Lit,
    LitParam,
    Loc,
    Not,
    Param,
    Seq,
    Skip,
    Var,
    VarParam,
    While,
    fvs,
    parse_command,
    seq_items,
    seq_of,
)


class ExpansionError(Exception):
    def __init__(self, msg: str, loc: Optional[Loc] = None):
        self.msg = msg
        self.loc = loc
        super().__init__(f"{loc}: {msg}" if loc else msg)


# ============================================================
# Built-in templates
# ============================================================

# Shared loop pattern for both map extensions: walk the input, bind each
# element to t_in, run the body, store t_out at the same index.
_MAP_TEMPLATE = """
i = 0;
out.length = in.length;
while i < in.length do
  t_in = in[i];
  c;
  out[i] = t_out;
  i = i + 1;
end
"""

# partition: size the output, clear each part (read-modify-write, since only
# whole variables can be length-assigned), compute per-element part indices
# with a bag map, then scatter input elements into their parts, dropping
# out-of-range indices.
_PARTITION_TEMPLATE = """
i = 0;
out.length = nParts;
while i < nParts do
  t_part = out[i];
  t_part.length = 0;
  out[i] = t_part;
  i = i + 1;
end;
bmap(in, out_idx, t_in, i, t_out, c);
i = 0;
while i < out_idx.length do
  t_idx = out_idx[i];
  if 0 <= t_idx && t_idx < out.length then
    t_part = out[t_idx];
    t_part.length = t_part.length + 1;
    t_part[t_part.length - 1] = in[i];
    out[t_idx] = t_part;
  else
    skip;
  end;
  i = i + 1;
end
"""

# bsum: accumulate the input with each element clipped to [-bound, bound].
_BSUM_TEMPLATE = """
idx = 0;
out = 0.0;
while idx < in.length do
  t_in = in[idx];
  if t_in < -1.0 * bound then
    out = out - bound;
  else
    if t_in > bound then
      out = out + bound;
    else
      out = out + t_in;
    end
  end;
  idx = idx + 1;
end
"""

# ac and repeat share the plain counted-loop pattern; they differ only in
# their typing rules (advanced composition vs. unrolling).
_LOOP_TEMPLATE = """
i = 0;
while i < n do
  c;
  i = i + 1;
end
"""

_BUILTIN_SOURCES: dict[str, tuple[tuple[str, ...], str]] = {
    "bmap": (("in", "out", "t_in", "i", "t_out", "c"), _MAP_TEMPLATE),
    "vmap": (("in", "out", "t_in", "i", "t_out", "c"), _MAP_TEMPLATE),
    "partition": (
        ("in", "out", "t_in", "i", "t_out", "t_idx", "out_idx", "t_part", "nParts", "c"),
        _PARTITION_TEMPLATE,
    ),
    "bsum": (("in", "out", "idx", "t_in", "bound"), _BSUM_TEMPLATE),
    "ac": (("i", "n", "w", "c"), _LOOP_TEMPLATE),
    "repeat": (("i", "n", "c"), _LOOP_TEMPLATE),
}

# Formals that are pure scratch state of the template: if the actual variable
# bound to one of these also occurs free in a command actual, the template's
# writes will interfere with the body's reads, which is almost never meant.
_SCRATCH_FORMALS: dict[str, tuple[str, ...]] = {
    "bmap": ("i",),
    "vmap": ("i",),
    "partition": ("i", "t_idx", "out_idx", "t_part"),
    "bsum": (),
    "ac": (),
    "repeat": (),
}


@dataclass
class ExtensionRegistry:
    """Known extensions by name.

    Names with specialized typing rules (the built-ins) cannot be redefined:
    the checker dispatches rules by hint name and would otherwise apply a
    rule whose conclusion the new template does not justify.
    """

    definitions: dict[str, ExtensionDefinition] = field(default_factory=dict)

    @staticmethod
    def default() -> "ExtensionRegistry":
        reg = ExtensionRegistry()
        for name, (formals, src) in _BUILTIN_SOURCES.items():
            reg.definitions[name] = ExtensionDefinition(name, formals, parse_command(src))
        return reg

    def with_definitions(self, defs: tuple[ExtensionDefinition, ...]) -> "ExtensionRegistry":
        merged = dict(self.definitions)
        for d in defs:
            if d.name in _BUILTIN_SOURCES:
                raise ExpansionError(f"cannot redefine built-in extension {d.name!r}", d.loc)
            merged[d.name] = d
        return ExtensionRegistry(merged)

    def get(self, name: str) -> Optional[ExtensionDefinition]:
        return self.definitions.get(name)


# ============================================================
# Substitution
# ============================================================


def _subst_expr(e: Expr, binding: dict[str, Param], loc: Optional[Loc]) -> Expr:
    if isinstance(e, Var):
        p = binding.get(e.name)
        if p is None:
            return e
        if isinstance(p, VarParam):
            return Var(p.name)
        if isinstance(p, ExprParam):
            return p.expr
        if isinstance(p, LitParam):
            return Lit(p.value)
        raise ExpansionError(
            f"command parameter {e.name!r} used in expression position", loc
        )
    if isinstance(e, Lit):
        return e
    if isinstance(e, BinOp):
        return BinOp(e.op, _subst_expr(e.lhs, binding, loc), _subst_expr(e.rhs, binding, loc))
    if isinstance(e, Not):
        return Not(_subst_expr(e.operand, binding, loc))
    if isinstance(e, Index):
        return Index(_subst_expr(e.base, binding, loc), _subst_expr(e.idx, binding, loc))
    if isinstance(e, Length):
        return Length(_subst_expr(e.base, binding, loc))
    if isinstance(e, Builtin):
        return Builtin(e.name, tuple(_subst_expr(a, binding, loc) for a in e.args))
    raise TypeError(f"substitute: unknown expression {e!r}")


def _subst_target(name: str, binding: dict[str, Param], loc: Optional[Loc]) -> str:
    p = binding.get(name)
    if p is None:
        return name
    if isinstance(p, VarParam):
        return p.name
    raise ExpansionError(
        f"formal {name!r} is assigned in the template, so its actual must be a variable", loc
    )


def substitute(template: Cmd, binding: dict[str, Param]) -> Cmd:
    """Replace formal parameters in `template` by their actual parameters."""
    items = []
    for c in seq_items(template):
        items.append(_subst_one(c, binding))
    return seq_of(items)


def _subst_one(c: Cmd, binding: dict[str, Param]) -> Cmd:
    if isinstance(c, Skip):
        return c
    if isinstance(c, Assign):
        return Assign(
            _subst_target(c.target, binding, c.loc),
            _subst_expr(c.expr, binding, c.loc),
            loc=c.loc,
        )
    if isinstance(c, IndexAssign):
        return IndexAssign(
            _subst_target(c.target, binding, c.loc),
            _subst_expr(c.idx, binding, c.loc),
            _subst_expr(c.expr, binding, c.loc),
            loc=c.loc,
        )
    if isinstance(c, LengthAssign):
        return LengthAssign(
            _subst_target(c.target, binding, c.loc),
            _subst_expr(c.expr, binding, c.loc),
            loc=c.loc,
        )
    if isinstance(c, Laplace):
        return Laplace(
            _subst_target(c.target, binding, c.loc),
            c.width,
            _subst_expr(c.center, binding, c.loc),
            loc=c.loc,
        )
    if isinstance(c, If):
        return If(
            _subst_expr(c.cond, binding, c.loc),
            substitute(c.then_branch, binding),
            substitute(c.else_branch, binding),
            loc=c.loc,
        )
    if isinstance(c, While):
        return While(
            _subst_expr(c.cond, binding, c.loc),
            substitute(c.body, binding),
            loc=c.loc,
        )
    if isinstance(c, ExtInvoke):
        if c.name in binding:
            p = binding[c.name]
            if c.params:
                raise ExpansionError(
                    f"formal parameter {c.name!r} cannot be invoked with arguments", c.loc
                )
            if isinstance(p, CmdParam):
                return p.cmd  # splice
            raise ExpansionError(
                f"formal {c.name!r} occurs as a command, so its actual must be a command",
                c.loc,
            )
        new_params: list[Param] = []
        for p in c.params:
            if isinstance(p, VarParam) and p.name in binding:
                new_params.append(binding[p.name])  # pass through, any kind
            elif isinstance(p, ExprParam):
                new_params.append(ExprParam(_subst_expr(p.expr, binding, c.loc)))
            elif isinstance(p, CmdParam):
                new_params.append(CmdParam(substitute(p.cmd, binding)))
            else:
                new_params.append(p)
        return ExtInvoke(c.name, tuple(new_params), loc=c.loc)
    if isinstance(c, Hinted):
        raise ExpansionError("templates cannot contain already-expanded code")
    raise TypeError(f"substitute: unknown command {c!r}")


# ============================================================
# Expansion
# ============================================================

_MAX_DEPTH = 64


def expand(
    cmd: Cmd,
    registry: ExtensionRegistry,
    warnings: Optional[list[str]] = None,
) -> Cmd:
    """Expand every extension invocation in `cmd`.

    The result contains no `ExtInvoke` nodes; each expansion site becomes a
    `Hinted` node whose hint records the invocation.  `warnings` (if given)
    collects scratch-variable collision messages.
    """
    return _expand(cmd, registry, warnings, 0)


def _expand(
    cmd: Cmd, registry: ExtensionRegistry, warnings: Optional[list[str]], depth: int
) -> Cmd:
    if depth > _MAX_DEPTH:
        raise ExpansionError("extension expansion exceeded maximum nesting depth")
    items = []
    for c in seq_items(cmd):
        items.append(_expand_one(c, registry, warnings, depth))
    return seq_of(items)


def _expand_one(
    c: Cmd, registry: ExtensionRegistry, warnings: Optional[list[str]], depth: int
) -> Cmd:
    if isinstance(c, (Skip, Assign, IndexAssign, LengthAssign, Laplace)):
        return c
    if isinstance(c, If):
        return If(
            c.cond,
            _expand(c.then_branch, registry, warnings, depth),
            _expand(c.else_branch, registry, warnings, depth),
            loc=c.loc,
        )
    if isinstance(c, While):
        return While(c.cond, _expand(c.body, registry, warnings, depth), loc=c.loc)
    if isinstance(c, Hinted):
        return Hinted(c.hint, _expand(c.body, registry, warnings, depth))
    if isinstance(c, ExtInvoke):
        defn = registry.get(c.name)
        if defn is None:
            raise ExpansionError(f"unknown extension {c.name!r}", c.loc)
        if len(c.params) != len(defn.formals):
            raise ExpansionError(
                f"{c.name} takes {len(defn.formals)} parameters, got {len(c.params)}",
                c.loc,
            )
        actuals: list[Param] = []
        for p in c.params:
            if isinstance(p, CmdParam):
                actuals.append(CmdParam(_expand(p.cmd, registry, warnings, depth + 1)))
            else:
                actuals.append(p)
        binding = dict(zip(defn.formals, actuals))
        _check_scratch_collisions(c.name, defn.formals, binding, warnings, c.loc)
        body = substitute(defn.template, binding)
        body = _expand(body, registry, warnings, depth + 1)
        return Hinted(ExpansionHint(c.name, tuple(actuals), loc=c.loc), body)
    raise TypeError(f"expand: unknown command {c!r}")


def _check_scratch_collisions(
    name: str,
    formals: tuple[str, ...],
    binding: dict[str, Param],
    warnings: Optional[list[str]],
    loc: Optional[Loc],
) -> None:
    if warnings is None:
        return
    scratch = _SCRATCH_FORMALS.get(name)
    if not scratch:
        return
    cmd_free: set[str] = set()
    for p in binding.values():
        if isinstance(p, CmdParam):
            cmd_free |= fvs(p.cmd)
    for formal in scratch:
        actual = binding.get(formal)
        if isinstance(actual, VarParam) and actual.name in cmd_free:
            where = f" at {loc}" if loc else ""
            warnings.append(
                f"{name}{where}: scratch variable {actual.name!r} (bound to formal "
                f"{formal!r}) also occurs in a command parameter; the template's "
                f"writes to it will interleave with the body's uses"
            )


def strip_hints(cmd: Cmd) -> Cmd:
    """Drop all expansion hints, leaving the raw expanded command."""
    items = []
    for c in seq_items(cmd):
        if isinstance(c, Hinted):
            items.append(strip_hints(c.body))
        elif isinstance(c, If):
            items.append(
                If(c.cond, strip_hints(c.then_branch), strip_hints(c.else_branch), loc=c.loc)
            )
        elif isinstance(c, While):
            items.append(While(c.cond, strip_hints(c.body), loc=c.loc))
        else:
            items.append(c)
    return seq_of(items)
