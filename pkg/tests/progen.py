"""Random generator for deterministic core programs that typecheck.

The sampled fragment deliberately stays inside what the strict analysis
accepts and what real-valued reasoning survives in floats:

* guards read only the reserved counter ``k`` and the reserved flag ``p``
  (never assigned by any template), so control flow is public and the two
  runs of a pair always take the same branches;
* denominators and subscripts are literals (no crashes, no data-dependent
  indexing), loops are counter-bounded (no divergence);
* products always have a literal factor, keeping magnitudes far from
  float overflow so no infinities or NaNs can appear;
* vector writes stay outside loop bodies, where repeated accumulation
  would widen the vector to unbounded sensitivity and the strict mode
  would then refuse to update it.

Every emitted program parses, typechecks in strict mode at zero privacy
cost, and runs to a final state on any well-shaped input.  `random_pair`
fabricates two stores whose per-variable distances respect the declared
sensitivities, which is exactly the relation the derived output context
promises to preserve.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

from dpsens.values import ExtReal

# Declarations available to every generated program.  `k` and `p` are
# reserved for control flow and keep sensitivity 0; the rest get a random
# declared sensitivity per program.
_FLOAT_VARS = ("a", "b", "t")
_INT_VARS = ("m",)
_VEC = "v"
_VEC_LEN = 3

_FLOAT_SENS = ("0", "0.5", "1", "2")
_INT_SENS = ("0", "1", "2")
_VEC_SENS = ("0", "1", "2")


def _flit(rng: random.Random) -> str:
    x = round(rng.uniform(-3.0, 3.0), 2)
    return f"({x:.2f})" if x < 0 else f"{x:.2f}"


def _ilit(rng: random.Random) -> str:
    n = rng.randint(-3, 3)
    return f"({n})" if n < 0 else str(n)


def _nonzero_flit(rng: random.Random) -> str:
    x = rng.choice((0.25, 0.5, 1.5, 2.0, 3.0, 4.0)) * rng.choice((1.0, -1.0))
    return f"({x})" if x < 0 else str(x)


def _nonzero_ilit(rng: random.Random) -> str:
    n = rng.choice((1, 2, 3, 4)) * rng.choice((1, -1))
    return f"({n})" if n < 0 else str(n)


def _fexpr(rng: random.Random, depth: int) -> str:
    if depth <= 0 or rng.random() < 0.3:
        return rng.choice(
            (
                rng.choice(_FLOAT_VARS),
                rng.choice(_FLOAT_VARS),
                _flit(rng),
                f"{_VEC}[{rng.randint(0, _VEC_LEN - 1)}]",
                f"fc({rng.choice(_INT_VARS + ('k',))})",
            )
        )
    kind = rng.randrange(6)
    if kind == 0:
        return f"({_fexpr(rng, depth - 1)} + {_fexpr(rng, depth - 1)})"
    if kind == 1:
        return f"({_fexpr(rng, depth - 1)} - {_fexpr(rng, depth - 1)})"
    if kind == 2:
        return f"({_fexpr(rng, depth - 1)} * {_nonzero_flit(rng)})"
    if kind == 3:
        return f"({_nonzero_flit(rng)} * {_fexpr(rng, depth - 1)})"
    if kind == 4:
        return f"({_fexpr(rng, depth - 1)} / {_nonzero_flit(rng)})"
    return f"clip({_fexpr(rng, depth - 1)}, {abs(float(_nonzero_flit(rng).strip('()')))})"


def _iexpr(rng: random.Random, depth: int) -> str:
    if depth <= 0 or rng.random() < 0.35:
        return rng.choice(("m", "k", _ilit(rng), f"{_VEC}.length"))
    kind = rng.randrange(4)
    if kind == 0:
        return f"({_iexpr(rng, depth - 1)} + {_iexpr(rng, depth - 1)})"
    if kind == 1:
        return f"({_iexpr(rng, depth - 1)} - {_iexpr(rng, depth - 1)})"
    if kind == 2:
        return f"({_iexpr(rng, depth - 1)} * {_nonzero_ilit(rng)})"
    return f"({_iexpr(rng, depth - 1)} / {_nonzero_ilit(rng)})"


def _guard(rng: random.Random) -> str:
    base = rng.choice(
        (
            f"k < {rng.randint(-1, 5)}",
            f"{rng.randint(-1, 5)} < k",
            "p",
        )
    )
    if rng.random() < 0.3:
        other = f"k < {rng.randint(0, 4)}"
        op = rng.choice(("&&", "||"))
        return f"({base}) {op} ({other})"
    return base


def _stmt(rng: random.Random, depth: int, in_loop: bool, st: dict) -> list[str]:
    roll = rng.random()
    if roll < 0.45 or depth <= 0:
        target = rng.choice(_FLOAT_VARS)
        return [f"{target} = {_fexpr(rng, rng.randint(1, 3))};"]
    if roll < 0.60:
        return [f"m = {_iexpr(rng, rng.randint(1, 3))};"]
    if roll < 0.72 and not in_loop and st["vec_open"]:
        # A slot update adds the expression's sensitivity onto the whole
        # vector's.  Clip-wrapped sources keep that finite; one raw write
        # may push the vector to unbounded, after which the strict mode
        # refuses further slot updates — so a raw write closes the door.
        slot = rng.randint(0, _VEC_LEN - 1)
        if rng.random() < 0.6:
            cap = rng.choice((0.5, 1.0, 2.0, 4.0))
            return [f"{_VEC}[{slot}] = clip({_fexpr(rng, rng.randint(1, 2))}, {cap});"]
        st["vec_open"] = False
        return [f"{_VEC}[{slot}] = {_fexpr(rng, rng.randint(1, 2))};"]
    if roll < 0.88:
        then = _block(rng, depth - 1, in_loop, rng.randint(1, 2), st)
        other = (
            _block(rng, depth - 1, in_loop, rng.randint(1, 2), st)
            if rng.random() < 0.5
            else ["skip;"]
        )
        return [f"if {_guard(rng)} then"] + then + ["else"] + other + ["end"]
    if in_loop:  # no nested loops: an inner reset of `k` could live-lock
        target = rng.choice(_FLOAT_VARS)
        return [f"{target} = {_fexpr(rng, rng.randint(1, 3))};"]
    body = _block(rng, depth - 1, True, rng.randint(1, 3), st)
    bound = rng.randint(2, 5)
    return ["k = 0;", f"while k < {bound} do"] + body + ["k = (k + 1);", "end"]


def _block(rng: random.Random, depth: int, in_loop: bool, n: int, st: dict) -> list[str]:
    out: list[str] = []
    for _ in range(n):
        out.extend(_stmt(rng, depth, in_loop, st))
    return out


def random_program(rng: random.Random) -> str:
    """One deterministic program over the fixed declarations."""
    lines = [
        f"a : float @ {rng.choice(_FLOAT_SENS)};",
        f"b : float @ {rng.choice(_FLOAT_SENS)};",
        "t : float;",
        f"m : int @ {rng.choice(_INT_SENS)};",
        "k : int;",
        "p : bool;",
        f"v : [float] @ {rng.choice(_VEC_SENS)};",
    ]
    lines.extend(_block(rng, 2, False, rng.randint(2, 6), {"vec_open": True}))
    return "\n".join(lines) + "\n"


def _bounded_delta(rng: random.Random, bound: float) -> float:
    if bound <= 0:
        return 0.0
    return rng.uniform(-bound, bound)


def random_pair(rng: random.Random, decls, sensitivities):
    """Two override stores whose distances respect the declarations."""
    from dpsens.values import FLOAT, INT, BOOL, VectorShape

    left: dict = {}
    right: dict = {}
    for name, shape in decls.items():
        s = sensitivities.get(name, ExtReal.of(0))
        bound = math.inf if s.is_inf else float(s.frac)
        if shape == FLOAT:
            base = round(rng.uniform(-4.0, 4.0), 3)
            left[name] = base
            right[name] = base + _bounded_delta(rng, min(bound, 8.0))
        elif shape == INT:
            base = rng.randint(-4, 4)
            step = 0 if bound < 1 else rng.randint(-int(min(bound, 8)), int(min(bound, 8)))
            left[name] = base
            right[name] = base + step
        elif shape == BOOL:
            flag = rng.random() < 0.5
            left[name] = flag
            right[name] = flag if bound < math.inf else rng.random() < 0.5
        elif shape == VectorShape(FLOAT):
            base = tuple(round(rng.uniform(-4.0, 4.0), 3) for _ in range(_VEC_LEN))
            remaining = min(bound, 8.0)
            deltas = []
            for _ in range(_VEC_LEN):
                d = _bounded_delta(rng, remaining)
                remaining -= abs(d)
                deltas.append(d)
            rng.shuffle(deltas)
            left[name] = base
            right[name] = tuple(x + d for x, d in zip(base, deltas))
        else:  # pragma: no cover - the generator never declares other shapes
            raise AssertionError(f"unhandled shape {shape}")
    return left, right
