"""Command-line front end.

Four subcommands share one binary:

``check``   parse, expand, and type a program; print the privacy report.
``expand``  print the program after extension expansion, re-parseable.
``run``     interpret a program on a seeded generator and print the store.
``dptest``  attack the program's claimed budget with the statistical harness.

Exit codes: 0 success (for ``dptest``: no violation found), 1 the program
does not parse/expand/type, 2 the run diverged, 3 the run crashed,
4 the harness found a violation, 64 bad command line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from typing import Optional

from .checker import CheckError, check_program
from .expander import ExpansionError, ExtensionRegistry, expand
from .interpreter import Crashed, Diverged, Final, RunConfig, exec_cmd
from .syntax import ParseError, parse_program, program_to_text
from .values import ProgramState, value_from_json, value_to_json
from . import harness

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_TYPE_ERROR = 1
EXIT_DIVERGED = 2
EXIT_CRASHED = 3
EXIT_VIOLATION = 4
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract wants 64."""

    def error(self, message: str):  # noqa: D401 - argparse hook
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="dpsens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", metavar="COMMAND")

    def common(p: _Parser) -> None:
        p.add_argument("file", help="program file to process")
        p.add_argument(
            "--format",
            choices=("json", "text"),
            default="json",
            help="report style (default: json)",
        )

    p_check = sub.add_parser("check", help="type a program and report its privacy cost")
    common(p_check)

    p_expand = sub.add_parser("expand", help="print the expanded program")
    p_expand.add_argument("file", help="program file to expand")

    p_run = sub.add_parser("run", help="interpret a program and print the final store")
    common(p_run)
    p_run.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p_run.add_argument(
        "--fuel", type=int, default=10**6, help="loop-step budget (default: 1000000)"
    )
    p_run.add_argument(
        "--input",
        metavar="FILE.json",
        help="JSON object of initial values overriding the zero store",
    )

    p_test = sub.add_parser(
        "dptest", help="estimate realized epsilon on an adjacent input pair"
    )
    common(p_test)
    p_test.add_argument("--trials", type=int, default=100_000, help="samples per side (default: 100000)")
    p_test.add_argument("--buckets", type=int, default=40, help="histogram buckets per dimension (default: 40)")
    p_test.add_argument(
        "--project",
        action="append",
        metavar="X[,Y...]",
        help="scalar variables to observe (default: every noised variable)",
    )
    p_test.add_argument("--slack", type=float, default=0.15, help="tolerated estimator excess (default: 0.15)")
    p_test.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p_test.add_argument("--fuel", type=int, default=10**6, help="loop-step budget per trial (default: 1000000)")
    p_test.add_argument("--target", help="input variable to perturb (default: the unique sensitive one)")
    p_test.add_argument(
        "--op",
        choices=("add-row", "remove-row"),
        default="add-row",
        help="how bag neighbors differ (default: add-row)",
    )
    p_test.add_argument("--size", type=int, default=5, help="rows in the generated bag (default: 5)")
    p_test.add_argument("--scale", type=float, default=1.0, help="magnitude of generated values (default: 1.0)")
    p_test.add_argument("--row-len", type=int, default=3, help="length of generated vector rows (default: 3)")

    return parser


def _read_file(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as err:
        raise _UsageError(f"cannot read {path}: {err.strerror or err}") from err


def _emit(payload: dict, fmt: str, text_lines) -> None:
    if fmt == "text":
        print("\n".join(text_lines(payload)))
    else:
        print(json.dumps(payload, indent=2))


def _sens_str(s) -> str:
    if s == "inf" or (isinstance(s, float) and math.isinf(s)):
        return "inf"
    return f"{s:g}"


def _context_table(context: dict) -> list[str]:
    width = max((len(x) for x in context), default=0)
    rows = []
    for x, entry in sorted(context.items()):
        rows.append(f"  {x:<{width}}  {entry['shape']:<12} @ {_sens_str(entry['sens'])}")
    return rows


def _cmd_check(args) -> int:
    report = check_program(_read_file(args.file))
    payload = report.to_json()

    def text(p: dict) -> list[str]:
        lines = [f"privacy cost: epsilon = {p['epsilon']:g}, delta = {p['delta']:g}", "context:"]
        lines += _context_table(p["context"])
        for entry in p["extensions"]:
            n = entry.get("count", 1)
            suffix = f" x{n}" if n > 1 else ""
            detail = f" ({entry['reason']})" if entry.get("reason") else ""
            lines.append(f"  {entry['extension']}: {entry['outcome']}{suffix}{detail}")
        for w in p["warnings"]:
            lines.append(f"warning: {w}")
        return lines

    _emit(payload, args.format, text)
    return EXIT_OK


def _cmd_expand(args) -> int:
    program = parse_program(_read_file(args.file))
    registry = ExtensionRegistry.default().with_definitions(program.extensions)
    warnings: list[str] = []
    expanded = expand(program.command, registry, warnings)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    flat = dataclasses.replace(program, extensions=(), command=expanded)
    sys.stdout.write(program_to_text(flat))
    return EXIT_OK


def _load_overrides(path: str, decls) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise _UsageError(f"cannot read {path}: {err.strerror or err}") from err
    except json.JSONDecodeError as err:
        raise _UsageError(f"{path}: not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise _UsageError(f"{path}: expected a JSON object of variable values")
    overrides = {}
    for name, obj in raw.items():
        if name not in decls:
            raise _UsageError(f"{path}: {name!r} is not declared in the program")
        try:
            overrides[name] = value_from_json(obj, decls[name])
        except ValueError as err:
            raise _UsageError(f"{path}: {name}: {err}") from err
    return overrides


def _cmd_run(args) -> int:
    program = parse_program(_read_file(args.file))
    registry = ExtensionRegistry.default().with_definitions(program.extensions)
    expanded = expand(program.command, registry, [])
    overrides = _load_overrides(args.input, program.decls) if args.input else None
    state = ProgramState.initial(program.decls, overrides)
    try:
        cfg = RunConfig(seed=args.seed, fuel=args.fuel)
    except ValueError as err:
        raise _UsageError(str(err)) from None
    outcome = exec_cmd(state, expanded, cfg)

    if isinstance(outcome, Final):
        store = {
            x: value_to_json(outcome.state.store[x], shape)
            for x, shape in program.decls.items()
        }
        payload = {"outcome": "final", "store": store}

        def text(p: dict) -> list[str]:
            width = max((len(x) for x in p["store"]), default=0)
            return [f"  {x:<{width}}  {json.dumps(v)}" for x, v in sorted(p["store"].items())]

        _emit(payload, args.format, text)
        return EXIT_OK
    if isinstance(outcome, Diverged):
        _emit({"outcome": "diverged"}, args.format, lambda p: ["diverged (out of fuel)"])
        return EXIT_DIVERGED
    assert isinstance(outcome, Crashed)
    where = f"{outcome.loc}: " if outcome.loc else ""
    payload = {"outcome": "crashed", "reason": f"{where}{outcome.reason}"}
    _emit(payload, args.format, lambda p: [f"crashed: {p['reason']}"])
    return EXIT_CRASHED


def _split_projection(values: Optional[list]) -> Optional[tuple[str, ...]]:
    if not values:
        return None
    names = []
    for chunk in values:
        names.extend(x.strip() for x in chunk.split(",") if x.strip())
    return tuple(names) or None


def _cmd_dptest(args) -> int:
    try:
        report, estimate = harness.run_neighbor_test(
            _read_file(args.file),
            target=args.target,
            project=_split_projection(args.project),
            trials=args.trials,
            buckets=args.buckets,
            seed=args.seed,
            fuel=args.fuel,
            size=args.size,
            scale=args.scale,
            op=args.op,
            row_len=args.row_len,
        )
    except ValueError as err:
        # Bad flag combination for this program (no observable noise, no
        # unique perturbation target, non-scalar projection, ...).
        raise _UsageError(str(err)) from None
    violated = harness.violates(estimate, report.epsilon, args.slack)
    payload = {
        "claimed": {"epsilon": report.epsilon, "delta": report.delta},
        "slack": args.slack,
        "estimate": estimate.to_json(),
        "verdict": "violation" if violated else "pass",
    }

    def text(p: dict) -> list[str]:
        hat = p["estimate"]["epsilon_hat"]
        hat_s = hat if isinstance(hat, str) else f"{hat:.4f}"
        return [
            f"claimed:  epsilon = {p['claimed']['epsilon']:g}, delta = {p['claimed']['delta']:g}",
            f"measured: epsilon >= {hat_s}  "
            f"({p['estimate']['trials_per_side']} trials/side, "
            f"projection {', '.join(p['estimate']['project'])})",
            f"verdict:  {p['verdict']} (slack {p['slack']:g})",
        ]

    _emit(payload, args.format, text)
    return EXIT_VIOLATION if violated else EXIT_OK


_DISPATCH = {
    "check": _cmd_check,
    "expand": _cmd_expand,
    "run": _cmd_run,
    "dptest": _cmd_dptest,
}


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _DISPATCH[args.subcommand](args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ExpansionError, CheckError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TYPE_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
