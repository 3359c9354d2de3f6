"""Shapes, extended-real sensitivities, and runtime value operations.

Runtime values are plain Python objects indexed by a `Shape`:

    int shape    -> int
    float shape  -> float
    bool shape   -> bool
    vector shape -> tuple of element values
    bag shape    -> tuple of element values (order is incidental; all bag
                    operations are permutation-invariant)

Every operation that cares about the vector/bag distinction takes the shape
explicitly, so the same tuple can be read as either without tagging each
value.  Tuples keep values immutable, which is what makes the interpreter's
copy-on-assign semantics a cheap shallow copy.

Distances follow the metric used by the sensitivity checker:

    int/float : |a - b|
    bool      : 0 if equal else infinity
    vector    : sum of element distances; infinity on length mismatch
    bag       : size of the symmetric multiset difference, where elements
                count as "the same" when their distance is exactly 0

All distances and sensitivities are `ExtReal`: exact non-negative rationals
extended with infinity, with the convention 0 * inf = 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Union


# ============================================================
# Shapes
# ============================================================


class Shape:
    """Base class for value shapes."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class IntShape(Shape):
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True, slots=True)
class FloatShape(Shape):
    def __str__(self) -> str:
        return "float"


@dataclass(frozen=True, slots=True)
class BoolShape(Shape):
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True, slots=True)
class VectorShape(Shape):
    elem: Shape

    def __str__(self) -> str:
        return f"[{self.elem}]"


@dataclass(frozen=True, slots=True)
class BagShape(Shape):
    elem: Shape

    def __str__(self) -> str:
        return f"{{{self.elem}}}"


INT = IntShape()
FLOAT = FloatShape()
BOOL = BoolShape()


def is_numeric(shape: Shape) -> bool:
    return isinstance(shape, (IntShape, FloatShape))


# ============================================================
# Extended non-negative reals
# ============================================================


@dataclass(frozen=True, slots=True)
class ExtReal:
    """A non-negative rational or infinity.

    Multiplication uses the sensitivity-analysis convention 0 * inf = 0:
    a value that is not looked at stays insensitive no matter how wild the
    other factor is.
    """

    _num: Optional[Fraction]  # None encodes infinity

    @staticmethod
    def of(x: Union["ExtReal", int, float, Fraction, str]) -> "ExtReal":
        if isinstance(x, ExtReal):
            return x
        if isinstance(x, str):
            if x.strip() in ("inf", "infinity"):
                return INF_SENS
            x = Fraction(x)
        if isinstance(x, float):
            if math.isnan(x):
                raise ValueError("NaN is not an extended real")
            if math.isinf(x):
                if x < 0:
                    raise ValueError("negative infinity is not a sensitivity")
                return INF_SENS
            x = Fraction(x)
        frac = Fraction(x)
        if frac < 0:
            raise ValueError(f"sensitivities are non-negative, got {frac}")
        return ExtReal(frac)

    @property
    def is_inf(self) -> bool:
        return self._num is None

    @property
    def frac(self) -> Fraction:
        if self._num is None:
            raise ValueError("infinite quantity has no finite value")
        return self._num

    def __add__(self, other: "ExtReal") -> "ExtReal":
        if self._num is None or other._num is None:
            return INF_SENS
        return ExtReal(self._num + other._num)

    def __mul__(self, other: "ExtReal") -> "ExtReal":
        a, b = self._num, other._num
        if a == 0 or b == 0:
            return ZERO_SENS  # 0 * inf = 0
        if a is None or b is None:
            return INF_SENS
        return ExtReal(a * b)

    def div_by(self, k: Fraction) -> "ExtReal":
        if k == 0:
            raise ZeroDivisionError("division of a sensitivity by zero")
        if self._num is None:
            return INF_SENS
        return ExtReal(self._num / abs(k))

    def _key(self) -> tuple:
        # Infinity sorts above every finite value.
        return (1,) if self._num is None else (0, self._num)

    def __lt__(self, other: "ExtReal") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "ExtReal") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "ExtReal") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "ExtReal") -> bool:
        return self._key() >= other._key()

    def to_float(self) -> float:
        return math.inf if self._num is None else float(self._num)

    def to_json(self) -> Union[float, str]:
        return "inf" if self._num is None else float(self._num)

    def __str__(self) -> str:
        return "inf" if self._num is None else str(self._num)

    def __repr__(self) -> str:
        return f"ExtReal({self})"


ZERO_SENS = ExtReal(Fraction(0))
ONE_SENS = ExtReal(Fraction(1))
INF_SENS = ExtReal(None)


def ext_max(*xs: ExtReal) -> ExtReal:
    out = ZERO_SENS
    for x in xs:
        if x > out:
            out = x
    return out


def ext_sum(xs: Iterable[ExtReal]) -> ExtReal:
    total = ZERO_SENS
    for x in xs:
        total = total + x
        if total.is_inf:
            return INF_SENS
    return total


# ============================================================
# Runtime values
# ============================================================

Value = Any  # int | float | bool | tuple, indexed by a Shape


def default_value(shape: Shape) -> Value:
    """The value a variable holds before any assignment."""
    if isinstance(shape, IntShape):
        return 0
    if isinstance(shape, FloatShape):
        return 0.0
    if isinstance(shape, BoolShape):
        return False
    if isinstance(shape, (VectorShape, BagShape)):
        return ()
    raise TypeError(f"unknown shape {shape!r}")


def well_shaped(v: Value, shape: Shape) -> bool:
    """Whether `v` inhabits `shape`.  bool is checked before int because
    Python's bool is an int subclass."""
    if isinstance(shape, BoolShape):
        return isinstance(v, bool)
    if isinstance(shape, IntShape):
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(shape, FloatShape):
        return isinstance(v, float)
    if isinstance(shape, (VectorShape, BagShape)):
        return isinstance(v, tuple) and all(well_shaped(x, shape.elem) for x in v)
    raise TypeError(f"unknown shape {shape!r}")


def values_equivalent(a: Value, b: Value, shape: Shape) -> bool:
    """Distance-zero equivalence: equality for scalars and vectors,
    permutation equivalence for bags."""
    if isinstance(shape, (IntShape, FloatShape, BoolShape)):
        return a == b and not (isinstance(a, float) and math.isnan(a))
    if isinstance(shape, VectorShape):
        if len(a) != len(b):
            return False
        return all(values_equivalent(x, y, shape.elem) for x, y in zip(a, b))
    if isinstance(shape, BagShape):
        return _bag_matching_deficit(a, b, shape.elem) == 0
    raise TypeError(f"unknown shape {shape!r}")


def _scalar_distance(a: Value, b: Value) -> ExtReal:
    if a == b:
        return ZERO_SENS
    d = abs(a - b)
    if isinstance(d, float) and (math.isnan(d) or math.isinf(d)):
        return INF_SENS
    return ExtReal.of(d)


def _shape_orderless_free(shape: Shape) -> bool:
    """True when equivalence at `shape` coincides with plain equality of the
    tuple encoding (no bag occurs inside), so hashing is valid."""
    if isinstance(shape, (IntShape, FloatShape, BoolShape)):
        return True
    if isinstance(shape, VectorShape):
        return _shape_orderless_free(shape.elem)
    return False


def _bag_matching_deficit(a: tuple, b: tuple, elem: Shape) -> int:
    """Size of the symmetric multiset difference of two bags, matching
    elements up to distance-zero equivalence.

    Equivalence is an equivalence relation, so a greedy match is exact:
    matching an element to any equivalent partner never blocks a better
    overall matching.
    """
    if _shape_orderless_free(elem):
        ca, cb = Counter(a), Counter(b)
        diff = ca - cb
        return sum(diff.values()) + sum((cb - ca).values())
    unmatched = list(b)
    missing = 0
    for x in a:
        for j, y in enumerate(unmatched):
            if values_equivalent(x, y, elem):
                del unmatched[j]
                break
        else:
            missing += 1
    return missing + len(unmatched)


def distance(a: Value, b: Value, shape: Shape) -> ExtReal:
    """The metric the sensitivity analysis bounds, per shape."""
    if isinstance(shape, (IntShape, FloatShape)):
        return _scalar_distance(a, b)
    if isinstance(shape, BoolShape):
        return ZERO_SENS if a == b else INF_SENS
    if isinstance(shape, VectorShape):
        if len(a) != len(b):
            return INF_SENS
        total = ZERO_SENS
        for x, y in zip(a, b):
            total = total + distance(x, y, shape.elem)
            if total.is_inf:
                return INF_SENS
        return total
    if isinstance(shape, BagShape):
        return ExtReal.of(_bag_matching_deficit(a, b, shape.elem))
    raise TypeError(f"unknown shape {shape!r}")


# ============================================================
# Program states
# ============================================================


@dataclass
class ProgramState:
    """A store of variable values plus the shape context it inhabits."""

    store: dict[str, Value]
    decls: Mapping[str, Shape]

    @staticmethod
    def initial(
        decls: Mapping[str, Shape], overrides: Optional[Mapping[str, Value]] = None
    ) -> "ProgramState":
        store = {x: default_value(s) for x, s in decls.items()}
        if overrides:
            for x, v in overrides.items():
                if x not in decls:
                    raise KeyError(f"override for undeclared variable {x!r}")
                if not well_shaped(v, decls[x]):
                    raise ValueError(f"override for {x!r} does not match shape {decls[x]}")
                store[x] = v
        return ProgramState(store, decls)

    def copy(self) -> "ProgramState":
        # Values are immutable, so a shallow copy of the store suffices.
        return ProgramState(dict(self.store), self.decls)


def state_distance(s1: ProgramState, s2: ProgramState) -> dict[str, ExtReal]:
    """Per-variable distance between two states over the shared declarations."""
    return {
        x: distance(s1.store[x], s2.store[x], shape) for x, shape in s1.decls.items()
    }


# ============================================================
# JSON encoding of values
# ============================================================


def value_to_json(v: Value, shape: Shape) -> Any:
    if isinstance(shape, (IntShape, FloatShape, BoolShape)):
        return v
    if isinstance(shape, VectorShape):
        return [value_to_json(x, shape.elem) for x in v]
    if isinstance(shape, BagShape):
        return {"bag": [value_to_json(x, shape.elem) for x in v]}
    raise TypeError(f"unknown shape {shape!r}")


def value_from_json(obj: Any, shape: Shape) -> Value:
    if isinstance(shape, BoolShape):
        if not isinstance(obj, bool):
            raise ValueError(f"expected a boolean, got {obj!r}")
        return obj
    if isinstance(shape, IntShape):
        if not isinstance(obj, int) or isinstance(obj, bool):
            raise ValueError(f"expected an integer, got {obj!r}")
        return obj
    if isinstance(shape, FloatShape):
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise ValueError(f"expected a number, got {obj!r}")
        return float(obj)
    if isinstance(shape, VectorShape):
        if not isinstance(obj, list):
            raise ValueError(f"expected a list for shape {shape}, got {obj!r}")
        return tuple(value_from_json(x, shape.elem) for x in obj)
    if isinstance(shape, BagShape):
        if not (isinstance(obj, dict) and set(obj.keys()) == {"bag"} and isinstance(obj["bag"], list)):
            raise ValueError(f'expected {{"bag": [...]}} for shape {shape}, got {obj!r}')
        return tuple(value_from_json(x, shape.elem) for x in obj["bag"])
    raise TypeError(f"unknown shape {shape!r}")
