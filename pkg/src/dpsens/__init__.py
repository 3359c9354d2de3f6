"""dpsens — a sensitivity-typed imperative language for differential privacy.

The toolchain, front to back:

  * `syntax` — concrete syntax, AST, parser, pretty-printer.
  * `expander` — rewrites extension invocations (`bmap`, `vmap`,
    `partition`, `bsum`, `ac`, `repeat`, plus user definitions) into core
    code, leaving hints behind for the checker.
  * `checker` — derives per-variable sensitivity bounds and the program's
    aggregate (epsilon, delta) privacy cost, preferring specialized
    per-extension rules and falling back to the expanded code.
  * `auxchecks` — the termination / determinism / linearity side
    judgments those rules lean on.
  * `interpreter` — probabilistic reference semantics with fuel.
  * `harness` — samples a program on adjacent inputs and estimates the
    realized epsilon, to cross-examine the checker's claim.
"""

from .values import (
    BOOL,
    BagShape,
    BoolShape,
    ExtReal,
    FLOAT,
    FloatShape,
    INF_SENS,
    INT,
    IntShape,
    ONE_SENS,
    ProgramState,
    Shape,
    VectorShape,
    ZERO_SENS,
    distance,
    state_distance,
    value_from_json,
    value_to_json,
)
from .syntax import (
    ParseError,
    ParsedProgram,
    parse_command,
    parse_expr,
    parse_program,
    pretty_print,
    program_to_text,
)
from .expander import ExpansionError, ExtensionRegistry, expand, strip_hints
from .checker import (
    CheckError,
    Mode,
    PrivacyCost,
    SensError,
    ShapeError,
    TypingContext,
    TypingReport,
    check_program,
    compose_iterations,
    type_cmd,
    type_expr,
)
from .auxchecks import AuxVerdict, check_determ, check_linear, check_term, weaken_linear
from .interpreter import (
    Crashed,
    Diverged,
    EvalError,
    ExecOutcome,
    Final,
    RunConfig,
    eval_expr,
    exec_cmd,
)

__version__ = "0.1.0"

__all__ = [
    "BOOL",
    "BagShape",
    "BoolShape",
    "ExtReal",
    "FLOAT",
    "FloatShape",
    "INF_SENS",
    "INT",
    "IntShape",
    "ONE_SENS",
    "ProgramState",
    "Shape",
    "VectorShape",
    "ZERO_SENS",
    "distance",
    "state_distance",
    "value_from_json",
    "value_to_json",
    "ParseError",
    "ParsedProgram",
    "parse_command",
    "parse_expr",
    "parse_program",
    "pretty_print",
    "program_to_text",
    "ExpansionError",
    "ExtensionRegistry",
    "expand",
    "strip_hints",
    "CheckError",
    "Mode",
    "PrivacyCost",
    "SensError",
    "ShapeError",
    "TypingContext",
    "TypingReport",
    "check_program",
    "compose_iterations",
    "type_cmd",
    "type_expr",
    "AuxVerdict",
    "check_determ",
    "check_linear",
    "check_term",
    "weaken_linear",
    "Crashed",
    "Diverged",
    "EvalError",
    "ExecOutcome",
    "Final",
    "RunConfig",
    "eval_expr",
    "exec_cmd",
    "__version__",
]
