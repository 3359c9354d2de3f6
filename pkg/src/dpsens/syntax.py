"""Abstract syntax, concrete syntax, and syntactic analyses.

A program is a block of variable declarations followed by a command.
Extension definitions (named command templates with formal parameters) may
appear interleaved with the declarations.

    x : float @ 1.0;               # declared shape and optional sensitivity
    extension twice(c) { c; c; };  # a command template
    x = x + 1.0;                   # the program body

Statements end in `;` except that the `;` after `end` is optional, matching
how the construct reads in either style.  `#` starts a line comment and
`/* ... */` a block comment.

The parser produces only core commands and `ExtInvoke` nodes — `Hinted`
nodes exist solely as output of the expander.  Float literals are written
with a decimal point (`1.0`, `2.5e-3`).  A `-` may prefix a numeric literal
(`-1.0`), but there is no general unary minus: negation of an expression is
written `-1.0 * e` or `0 - n`.

`fvs`/`mvs` compute free and modified variable sets.  For a not-yet-expanded
`ExtInvoke` the modified set is an over-approximation (all variable
parameters plus the modified sets of command parameters) since the template
is not consulted.  Deep `Seq` spines are walked iteratively throughout; the
checker manufactures sequences thousands of nodes deep when it unrolls
loops, which would overflow Python's recursion stack otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union

from .values import (
    BOOL,
    FLOAT,
    INT,
    BagShape,
    ExtReal,
    Shape,
    VectorShape,
)

# ============================================================
# Source locations and errors
# ============================================================


@dataclass(frozen=True, slots=True)
class Loc:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class ParseError(Exception):
    def __init__(self, msg: str, loc: Optional[Loc] = None):
        self.msg = msg
        self.loc = loc
        super().__init__(f"{loc}: {msg}" if loc else msg)


# ============================================================
# Expressions
# ============================================================


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Lit(Expr):
    value: Union[int, float, bool]


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str  # + - * / < <= > >= == && ||
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Not(Expr):
    operand: Expr


@dataclass(frozen=True, slots=True)
class Index(Expr):
    base: Expr
    idx: Expr


@dataclass(frozen=True, slots=True)
class Length(Expr):
    base: Expr


@dataclass(frozen=True, slots=True)
class Builtin(Expr):
    name: str  # fc clip exp log dot scale zeros emptybag
    args: tuple[Expr, ...]


BUILTIN_NAMES = {"fc", "clip", "exp", "log", "dot", "scale"}


# ============================================================
# Commands
# ============================================================


class Cmd:
    __slots__ = ()


class Param:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class ExprParam(Param):
    expr: Expr


@dataclass(frozen=True, slots=True)
class CmdParam(Param):
    cmd: "Cmd"


@dataclass(frozen=True, slots=True)
class VarParam(Param):
    name: str


@dataclass(frozen=True, slots=True)
class LitParam(Param):
    value: Union[int, float, bool]


@dataclass(frozen=True, slots=True)
class ExpansionHint:
    """Record of the invocation an expanded command came from.

    The parameters reference the same AST nodes that were substituted into
    the expansion, so specialized typing rules can inspect the actuals
    without re-deriving them from the expanded code.
    """

    name: str
    params: tuple[Param, ...]
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Skip(Cmd):
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign(Cmd):
    target: str
    expr: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IndexAssign(Cmd):
    target: str
    idx: Expr
    expr: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LengthAssign(Cmd):
    target: str
    expr: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Laplace(Cmd):
    """`x $= lap(width, center)` — draw from a Laplace distribution centred
    on the value of `center` with the given literal width."""

    target: str
    width: float
    center: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If(Cmd):
    cond: Expr
    then_branch: Cmd
    else_branch: Cmd
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While(Cmd):
    cond: Expr
    body: Cmd
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq(Cmd):
    first: Cmd
    second: Cmd


@dataclass(frozen=True)
class ExtInvoke(Cmd):
    name: str
    params: tuple[Param, ...]
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Hinted(Cmd):
    hint: ExpansionHint
    body: Cmd


@dataclass(frozen=True, slots=True)
class ExtensionDefinition:
    name: str
    formals: tuple[str, ...]
    template: Cmd
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class ParsedProgram:
    extensions: tuple[ExtensionDefinition, ...]
    command: Cmd
    decls: dict[str, Shape]
    sensitivities: dict[str, ExtReal]


# ============================================================
# Parameter views
# ============================================================


def param_var(p: Param) -> Optional[str]:
    """The variable name a parameter denotes, if it is a variable."""
    return p.name if isinstance(p, VarParam) else None


def param_expr(p: Param) -> Optional[Expr]:
    """The parameter read as an expression (variables and literals count)."""
    if isinstance(p, VarParam):
        return Var(p.name)
    if isinstance(p, LitParam):
        return Lit(p.value)
    if isinstance(p, ExprParam):
        return p.expr
    return None


def param_cmd(p: Param) -> Optional[Cmd]:
    return p.cmd if isinstance(p, CmdParam) else None


def param_literal(p: Param) -> Optional[Union[int, float, bool]]:
    """The parameter's literal value, accepting both `LitParam` and a literal
    expression (how negative literals arrive)."""
    if isinstance(p, LitParam):
        return p.value
    if isinstance(p, ExprParam) and isinstance(p.expr, Lit):
        return p.expr.value
    return None


# ============================================================
# Sequence helpers
# ============================================================


def seq_items(c: Cmd) -> list[Cmd]:
    """Flatten a Seq spine into statement order, iteratively."""
    items: list[Cmd] = []
    stack = [c]
    while stack:
        node = stack.pop()
        if isinstance(node, Seq):
            stack.append(node.second)
            stack.append(node.first)
        else:
            items.append(node)
    return items


def seq_of(items: Iterable[Cmd]) -> Cmd:
    """Right-fold a statement list back into a Seq spine."""
    items = list(items)
    if not items:
        return Skip()
    out = items[-1]
    for c in reversed(items[:-1]):
        out = Seq(c, out)
    return out


# ============================================================
# Free and modified variables
# ============================================================


def _expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, BinOp):
        return (e.lhs, e.rhs)
    if isinstance(e, Not):
        return (e.operand,)
    if isinstance(e, Index):
        return (e.base, e.idx)
    if isinstance(e, Length):
        return (e.base,)
    if isinstance(e, Builtin):
        return e.args
    return ()


def fvs(node: Union[Expr, Cmd]) -> frozenset[str]:
    """All variables occurring in the node (assignment targets included)."""
    out: set[str] = set()
    stack: list[Union[Expr, Cmd]] = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Expr):
            stack.extend(_expr_children(n))
        elif isinstance(n, Seq):
            stack.append(n.first)
            stack.append(n.second)
        elif isinstance(n, Skip):
            pass
        elif isinstance(n, Assign):
            out.add(n.target)
            stack.append(n.expr)
        elif isinstance(n, IndexAssign):
            out.add(n.target)
            stack.append(n.idx)
            stack.append(n.expr)
        elif isinstance(n, LengthAssign):
            out.add(n.target)
            stack.append(n.expr)
        elif isinstance(n, Laplace):
            out.add(n.target)
            stack.append(n.center)
        elif isinstance(n, If):
            stack.append(n.cond)
            stack.append(n.then_branch)
            stack.append(n.else_branch)
        elif isinstance(n, While):
            stack.append(n.cond)
            stack.append(n.body)
        elif isinstance(n, Hinted):
            stack.append(n.body)
        elif isinstance(n, ExtInvoke):
            for p in n.params:
                if isinstance(p, VarParam):
                    out.add(p.name)
                elif isinstance(p, ExprParam):
                    stack.append(p.expr)
                elif isinstance(p, CmdParam):
                    stack.append(p.cmd)
        else:
            raise TypeError(f"fvs: unknown node {n!r}")
    return frozenset(out)


def mvs(node: Union[Expr, Cmd]) -> frozenset[str]:
    """Variables a command may write.  Expressions modify nothing.

    For an unexpanded `ExtInvoke` this over-approximates: every variable
    parameter plus the modified sets of command parameters."""
    out: set[str] = set()
    stack: list[Union[Expr, Cmd]] = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Expr):
            pass
        elif isinstance(n, (Assign, IndexAssign, LengthAssign, Laplace)):
            out.add(n.target)
        elif isinstance(n, Seq):
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
                if isinstance(p, VarParam):
                    out.add(p.name)
                elif isinstance(p, CmdParam):
                    stack.append(p.cmd)
        elif isinstance(n, Skip):
            pass
        else:
            raise TypeError(f"mvs: unknown node {n!r}")
    return frozenset(out)


# ============================================================
# Lexer
# ============================================================

KEYWORDS = {
    "if",
    "then",
    "else",
    "end",
    "while",
    "do",
    "skip",
    "extension",
    "lap",
    "zeros",
    "true",
    "false",
    "int",
    "float",
    "bool",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*|/\*.*?\*/)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\$=|==|<=|>=|&&|\|\||[=<>+\-*/!()\[\]{},;:@.])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # 'INT' | 'FLOAT' | 'IDENT' | a keyword | an operator | 'EOF'
    text: str
    loc: Loc


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            loc = Loc(line, pos - line_start + 1)
            raise ParseError(f"unexpected character {source[pos]!r}", loc)
        loc = Loc(line, pos - line_start + 1)
        text = m.group(0)
        if m.lastgroup == "float":
            tokens.append(Token("FLOAT", text, loc))
        elif m.lastgroup == "int":
            tokens.append(Token("INT", text, loc))
        elif m.lastgroup == "ident":
            kind = text if text in KEYWORDS else "IDENT"
            tokens.append(Token(kind, text, loc))
        elif m.lastgroup == "op":
            tokens.append(Token(text, text, loc))
        # whitespace/comments fall through, but still advance line counts
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", Loc(line, pos - line_start + 1)))
    return tokens


# ============================================================
# Parser
# ============================================================

_CMP_OPS = ("<", "<=", ">", ">=", "==")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # ---- token plumbing ----

    def peek(self, ahead: int = 0) -> Token:
        i = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[i]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text or 'end of input'!r}", t.loc)
        return self.advance()

    def _fail(self, msg: str) -> ParseError:
        return ParseError(msg, self.peek().loc)

    # ---- program structure ----

    def parse_program(self) -> ParsedProgram:
        decls: dict[str, Shape] = {}
        sens: dict[str, ExtReal] = {}
        extensions: list[ExtensionDefinition] = []
        while True:
            t = self.peek()
            if t.kind == "extension":
                extensions.append(self.parse_extension_def())
            elif t.kind == "IDENT" and self.peek(1).kind == ":":
                name, shape, s = self.parse_decl()
                if name in decls:
                    raise ParseError(f"duplicate declaration of {name!r}", t.loc)
                decls[name] = shape
                sens[name] = s
            else:
                break
        body = self.parse_statements(("EOF",))
        self.expect("EOF")
        return ParsedProgram(tuple(extensions), body, decls, sens)

    def parse_decl(self) -> tuple[str, Shape, ExtReal]:
        name = self.expect("IDENT").text
        self.expect(":")
        shape = self.parse_shape()
        s = ExtReal.of(0)
        if self.peek().kind == "@":
            self.advance()
            t = self.peek()
            if t.kind in ("INT", "FLOAT"):
                self.advance()
                s = ExtReal.of(Fraction(t.text))
            elif t.kind == "IDENT" and t.text == "inf":
                self.advance()
                s = ExtReal.of("inf")
            else:
                raise self._fail("expected a non-negative number or 'inf' after '@'")
        self.expect(";")
        return name, shape, s

    def parse_shape(self) -> Shape:
        t = self.advance()
        if t.kind == "int":
            return INT
        if t.kind == "float":
            return FLOAT
        if t.kind == "bool":
            return BOOL
        if t.kind == "[":
            elem = self.parse_shape()
            self.expect("]")
            return VectorShape(elem)
        if t.kind == "{":
            elem = self.parse_shape()
            self.expect("}")
            return BagShape(elem)
        raise ParseError(f"expected a shape, found {t.text!r}", t.loc)

    def parse_extension_def(self) -> ExtensionDefinition:
        loc = self.expect("extension").loc
        name = self.expect("IDENT").text
        self.expect("(")
        formals = [self.expect("IDENT").text]
        while self.peek().kind == ",":
            self.advance()
            formals.append(self.expect("IDENT").text)
        self.expect(")")
        self.expect("{")
        body = self.parse_statements(("}",))
        self.expect("}")
        if self.peek().kind == ";":
            self.advance()
        if len(set(formals)) != len(formals):
            raise ParseError(f"extension {name!r} repeats a formal parameter", loc)
        return ExtensionDefinition(name, tuple(formals), body, loc)

    # ---- statements ----

    def parse_statements(self, stop_kinds: tuple[str, ...]) -> Cmd:
        items = [self.parse_statement()]
        while self.peek().kind not in stop_kinds:
            items.append(self.parse_statement())
        return seq_of(items)

    def parse_statement(self) -> Cmd:
        t = self.peek()
        if t.kind == "skip":
            self.advance()
            self.expect(";")
            return Skip(loc=t.loc)
        if t.kind == "if":
            self.advance()
            cond = self.parse_expr()
            self.expect("then")
            then_branch = self.parse_statements(("else",))
            self.expect("else")
            else_branch = self.parse_statements(("end",))
            self.expect("end")
            if self.peek().kind == ";":
                self.advance()
            return If(cond, then_branch, else_branch, loc=t.loc)
        if t.kind == "while":
            self.advance()
            cond = self.parse_expr()
            self.expect("do")
            body = self.parse_statements(("end",))
            self.expect("end")
            if self.peek().kind == ";":
                self.advance()
            return While(cond, body, loc=t.loc)
        if t.kind == "IDENT":
            return self._parse_ident_statement()
        raise ParseError(f"expected a statement, found {t.text or 'end of input'!r}", t.loc)

    def _parse_ident_statement(self) -> Cmd:
        name_tok = self.expect("IDENT")
        name = name_tok.text
        t = self.peek()
        if t.kind == "=":
            self.advance()
            e = self.parse_expr()
            self.expect(";")
            return Assign(name, e, loc=name_tok.loc)
        if t.kind == "$=":
            self.advance()
            self.expect("lap")
            self.expect("(")
            w_tok = self.peek()
            if w_tok.kind not in ("FLOAT", "INT"):
                raise self._fail("lap width must be a literal number")
            self.advance()
            width = float(w_tok.text)
            if not width > 0:
                raise ParseError("lap width must be strictly positive", w_tok.loc)
            self.expect(",")
            center = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return Laplace(name, width, center, loc=name_tok.loc)
        if t.kind == "[":
            self.advance()
            idx = self.parse_expr()
            self.expect("]")
            self.expect("=")
            e = self.parse_expr()
            self.expect(";")
            return IndexAssign(name, idx, e, loc=name_tok.loc)
        if t.kind == ".":
            self.advance()
            prop = self.expect("IDENT")
            if prop.text != "length":
                raise ParseError(f"unknown property {prop.text!r} (only .length exists)", prop.loc)
            self.expect("=")
            e = self.parse_expr()
            self.expect(";")
            return LengthAssign(name, e, loc=name_tok.loc)
        if t.kind == "(":
            self.advance()
            params: list[Param] = []
            if self.peek().kind != ")":
                params.append(self.parse_param())
                while self.peek().kind == ",":
                    self.advance()
                    params.append(self.parse_param())
            self.expect(")")
            self.expect(";")
            return ExtInvoke(name, tuple(params), loc=name_tok.loc)
        if t.kind == ";":
            # A bare `name;` invokes a zero-parameter extension; templates
            # use this form for command-valued formal parameters.
            self.advance()
            return ExtInvoke(name, (), loc=name_tok.loc)
        raise ParseError(f"cannot parse statement starting at {name!r}", name_tok.loc)

    # ---- extension parameters ----

    def parse_param(self) -> Param:
        t = self.peek()
        nxt = self.peek(1)
        if t.kind == "IDENT" and nxt.kind in (",", ")"):
            self.advance()
            return VarParam(t.text)
        if t.kind in ("INT", "FLOAT", "true", "false") and nxt.kind in (",", ")"):
            self.advance()
            return LitParam(self._literal_value(t))
        # Try a command parameter: one or more `;`-terminated statements.
        save = self.pos
        try:
            items = [self.parse_statement()]
            while self.peek().kind not in (",", ")"):
                items.append(self.parse_statement())
            return CmdParam(seq_of(items))
        except ParseError:
            self.pos = save
        return ExprParam(self.parse_expr())

    @staticmethod
    def _literal_value(t: Token) -> Union[int, float, bool]:
        if t.kind == "INT":
            return int(t.text)
        if t.kind == "FLOAT":
            return float(t.text)
        return t.kind == "true"

    # ---- expressions ----

    def parse_expr(self) -> Expr:
        return self._parse_or()

    def _parse_or(self) -> Expr:
        e = self._parse_and()
        while self.peek().kind == "||":
            self.advance()
            e = BinOp("||", e, self._parse_and())
        return e

    def _parse_and(self) -> Expr:
        e = self._parse_cmp()
        while self.peek().kind == "&&":
            self.advance()
            e = BinOp("&&", e, self._parse_cmp())
        return e

    def _parse_cmp(self) -> Expr:
        e = self._parse_add()
        if self.peek().kind in _CMP_OPS:
            op = self.advance().kind
            e = BinOp(op, e, self._parse_add())
        return e

    def _parse_add(self) -> Expr:
        e = self._parse_mul()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            e = BinOp(op, e, self._parse_mul())
        return e

    def _parse_mul(self) -> Expr:
        e = self._parse_unary()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            e = BinOp(op, e, self._parse_unary())
        return e

    def _parse_unary(self) -> Expr:
        t = self.peek()
        if t.kind == "!":
            self.advance()
            return Not(self._parse_unary())
        # There is no general unary minus; a `-` prefixes numeric literals
        # only (`-1.0 * e` is the idiom for negation).
        if t.kind == "-" and self.peek(1).kind in ("INT", "FLOAT"):
            self.advance()
            lit = self.advance()
            return Lit(-int(lit.text) if lit.kind == "INT" else -float(lit.text))
        return self._parse_postfix()

    def _parse_postfix(self) -> Expr:
        e = self._parse_atom()
        while True:
            t = self.peek()
            if t.kind == "[":
                self.advance()
                idx = self.parse_expr()
                self.expect("]")
                e = Index(e, idx)
            elif t.kind == "." and self.peek(1).kind == "IDENT" and self.peek(1).text == "length":
                self.advance()
                self.advance()
                e = Length(e)
            else:
                return e

    def _parse_atom(self) -> Expr:
        t = self.peek()
        if t.kind == "INT":
            self.advance()
            return Lit(int(t.text))
        if t.kind == "FLOAT":
            self.advance()
            return Lit(float(t.text))
        if t.kind in ("true", "false"):
            self.advance()
            return Lit(t.kind == "true")
        if t.kind == "(":
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "{":
            self.advance()
            self.expect("}")
            return Builtin("emptybag", ())
        if t.kind == "zeros":
            self.advance()
            self.expect("[")
            n_tok = self.expect("INT")
            self.expect("]")
            return Builtin("zeros", (Lit(int(n_tok.text)),))
        if t.kind == "IDENT":
            self.advance()
            if self.peek().kind == "(":
                return self._parse_call(t)
            return Var(t.text)
        raise ParseError(f"expected an expression, found {t.text or 'end of input'!r}", t.loc)

    def _parse_call(self, name_tok: Token) -> Expr:
        self.expect("(")
        args: list[Expr] = []
        if self.peek().kind != ")":
            args.append(self.parse_expr())
            while self.peek().kind == ",":
                self.advance()
                args.append(self.parse_expr())
        self.expect(")")
        name = name_tok.text
        if name == "length":
            if len(args) != 1:
                raise ParseError("length(...) takes exactly one argument", name_tok.loc)
            return Length(args[0])
        if name not in BUILTIN_NAMES:
            raise ParseError(f"unknown builtin {name!r}", name_tok.loc)
        return Builtin(name, tuple(args))


def parse_program(source: str) -> ParsedProgram:
    """Parse a full program: declarations, extension definitions, command."""
    return _Parser(tokenize(source)).parse_program()


def parse_command(source: str) -> Cmd:
    """Parse a bare statement sequence (no declarations); used for extension
    templates and in tests."""
    p = _Parser(tokenize(source))
    body = p.parse_statements(("EOF",))
    p.expect("EOF")
    return body


def parse_expr(source: str) -> Expr:
    p = _Parser(tokenize(source))
    e = p.parse_expr()
    p.expect("EOF")
    return e


# ============================================================
# Pretty printer
# ============================================================

_PREC = {
    "||": 1,
    "&&": 2,
    "<": 3,
    "<=": 3,
    ">": 3,
    ">=": 3,
    "==": 3,
    "+": 4,
    "-": 4,
    "*": 5,
    "/": 5,
}
_PREC_NOT = 6
_PREC_POSTFIX = 7
_PREC_ATOM = 8


def float_lit_str(v: float) -> str:
    """Render a float so it re-lexes as a float literal (always with a
    decimal point, even in exponent notation)."""
    s = repr(v)
    if "e" in s or "E" in s:
        mant, _, exp = s.partition("e" if "e" in s else "E")
        if "." not in mant:
            mant += ".0"
        return f"{mant}e{exp}"
    if "." not in s:
        s += ".0"
    return s


def _expr_prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Not):
        return _PREC_NOT
    if isinstance(e, Lit) and not isinstance(e.value, bool) and e.value < 0:
        return _PREC_NOT  # prints with a leading minus, which binds like unary
    if isinstance(e, (Index, Length)):
        return _PREC_POSTFIX
    return _PREC_ATOM


def pretty_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        if isinstance(e.value, float):
            return float_lit_str(e.value)
        return str(e.value)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        lhs = pretty_expr(e.lhs)
        rhs = pretty_expr(e.rhs)
        # Comparisons are non-associative; for the associative levels we
        # parenthesize the right operand on ties to preserve the tree.
        if _expr_prec(e.lhs) < p or (_expr_prec(e.lhs) == p and p == 3):
            lhs = f"({lhs})"
        if _expr_prec(e.rhs) <= p:
            rhs = f"({rhs})"
        return f"{lhs} {e.op} {rhs}"
    if isinstance(e, Not):
        inner = pretty_expr(e.operand)
        if _expr_prec(e.operand) < _PREC_NOT:
            inner = f"({inner})"
        return f"!{inner}"
    if isinstance(e, Index):
        base = pretty_expr(e.base)
        if _expr_prec(e.base) < _PREC_POSTFIX:
            base = f"({base})"
        return f"{base}[{pretty_expr(e.idx)}]"
    if isinstance(e, Length):
        base = pretty_expr(e.base)
        if _expr_prec(e.base) < _PREC_POSTFIX:
            base = f"({base})"
        return f"{base}.length"
    if isinstance(e, Builtin):
        if e.name == "emptybag":
            return "{}"
        if e.name == "zeros":
            return f"zeros[{e.args[0].value}]"
        return f"{e.name}({', '.join(pretty_expr(a) for a in e.args)})"
    raise TypeError(f"pretty_expr: unknown node {e!r}")


def _pretty_param(p: Param) -> str:
    if isinstance(p, VarParam):
        return p.name
    if isinstance(p, LitParam):
        return pretty_expr(Lit(p.value))
    if isinstance(p, ExprParam):
        return pretty_expr(p.expr)
    if isinstance(p, CmdParam):
        return " ".join(_pretty_lines(p.cmd, 0)).strip()
    raise TypeError(f"unknown param {p!r}")


def _pretty_lines(c: Cmd, indent: int) -> list[str]:
    pad = "  " * indent
    out: list[str] = []
    for stmt in seq_items(c):
        if isinstance(stmt, Skip):
            out.append(f"{pad}skip;")
        elif isinstance(stmt, Assign):
            out.append(f"{pad}{stmt.target} = {pretty_expr(stmt.expr)};")
        elif isinstance(stmt, IndexAssign):
            out.append(f"{pad}{stmt.target}[{pretty_expr(stmt.idx)}] = {pretty_expr(stmt.expr)};")
        elif isinstance(stmt, LengthAssign):
            out.append(f"{pad}{stmt.target}.length = {pretty_expr(stmt.expr)};")
        elif isinstance(stmt, Laplace):
            out.append(
                f"{pad}{stmt.target} $= lap({float_lit_str(stmt.width)}, {pretty_expr(stmt.center)});"
            )
        elif isinstance(stmt, If):
            out.append(f"{pad}if {pretty_expr(stmt.cond)} then")
            out.extend(_pretty_lines(stmt.then_branch, indent + 1))
            out.append(f"{pad}else")
            out.extend(_pretty_lines(stmt.else_branch, indent + 1))
            out.append(f"{pad}end")
        elif isinstance(stmt, While):
            out.append(f"{pad}while {pretty_expr(stmt.cond)} do")
            out.extend(_pretty_lines(stmt.body, indent + 1))
            out.append(f"{pad}end")
        elif isinstance(stmt, ExtInvoke):
            args = ", ".join(_pretty_param(p) for p in stmt.params)
            out.append(f"{pad}{stmt.name}({args});" if stmt.params else f"{pad}{stmt.name};")
        elif isinstance(stmt, Hinted):
            head = ", ".join(_pretty_param(p) for p in stmt.hint.params)
            out.append(f"{pad}# expanded from {stmt.hint.name}({head})")
            out.extend(_pretty_lines(stmt.body, indent))
        else:
            raise TypeError(f"pretty_print: unknown command {stmt!r}")
    return out


def pretty_print(c: Cmd) -> str:
    """Render a command as concrete syntax.  Expansion hints become comments,
    so re-parsing yields the hint-free command."""
    return "\n".join(_pretty_lines(c, 0)) + "\n"


def _sens_ann_str(s: ExtReal) -> str:
    if s.is_inf:
        return "inf"
    if s.frac.denominator == 1:
        return str(s.frac.numerator)
    return float_lit_str(float(s.frac))


def program_to_text(prog: ParsedProgram) -> str:
    """Render a full program: declarations, extension definitions, body."""
    lines: list[str] = []
    for name, shape in prog.decls.items():
        s = prog.sensitivities.get(name, ExtReal.of(0))
        ann = "" if (not s.is_inf and s.frac == 0) else f" @ {_sens_ann_str(s)}"
        lines.append(f"{name} : {shape}{ann};")
    for ext in prog.extensions:
        lines.append(f"extension {ext.name}({', '.join(ext.formals)}) {{")
        lines.extend(_pretty_lines(ext.template, 1))
        lines.append("};")
    if lines:
        lines.append("")
    lines.append(pretty_print(prog.command).rstrip("\n"))
    return "\n".join(lines) + "\n"
