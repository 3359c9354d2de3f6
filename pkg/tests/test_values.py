import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsens.values import (
    BOOL,
    FLOAT,
    INT,
    BagShape,
    ExtReal,
    INF_SENS,
    ONE_SENS,
    VectorShape,
    ZERO_SENS,
    default_value,
    distance,
    ext_max,
    ext_sum,
    value_from_json,
    value_to_json,
    well_shaped,
)

from oracles import bag_distance_bf, element_distance, vector_distance


# ------------------------------------------------------------
# Extended reals
# ------------------------------------------------------------


def test_extreal_zero_times_inf_is_zero():
    assert ZERO_SENS * INF_SENS == ZERO_SENS
    assert INF_SENS * ZERO_SENS == ZERO_SENS


def test_extreal_inf_absorbs_positive():
    assert INF_SENS * ONE_SENS == INF_SENS
    assert INF_SENS + ZERO_SENS == INF_SENS
    assert ExtReal.of(3) * INF_SENS == INF_SENS


def test_extreal_exact_rationals():
    tenth = ExtReal.of(Fraction(1, 10))
    assert ext_sum([tenth] * 10) == ONE_SENS  # no float drift
    assert ExtReal.of(157).div_by(Fraction(1000)).frac == Fraction(157, 1000)


def test_extreal_of_accepts_floats_exactly():
    assert ExtReal.of(0.5).frac == Fraction(1, 2)
    assert ExtReal.of("inf").is_inf


def test_extreal_ordering():
    assert ZERO_SENS < ONE_SENS < INF_SENS
    assert not INF_SENS < INF_SENS
    assert ext_max(ZERO_SENS, INF_SENS, ONE_SENS) == INF_SENS


def test_extreal_div_by_positive_only():
    with pytest.raises(ZeroDivisionError):
        ONE_SENS.div_by(Fraction(0))


@given(st.fractions(min_value=0, max_value=100), st.fractions(min_value=0, max_value=100))
def test_extreal_add_mul_match_fractions(a, b):
    assert (ExtReal.of(a) + ExtReal.of(b)).frac == a + b
    assert (ExtReal.of(a) * ExtReal.of(b)).frac == a * b


# ------------------------------------------------------------
# Distances: the worked example and the brute-force oracle
# ------------------------------------------------------------


def test_worked_example_vector_vs_bag_distance():
    a, b = (1, 2, 5), (1, 3, 4)
    assert distance(a, b, VectorShape(INT)) == ExtReal.of(2)
    assert distance(a, b, BagShape(INT)) == ExtReal.of(4)


def test_vector_distance_length_mismatch_is_inf():
    assert distance((1.0,), (1.0, 2.0), VectorShape(FLOAT)).is_inf


def test_bool_distance():
    assert distance(True, True, BOOL) == ZERO_SENS
    assert distance(True, False, BOOL).is_inf


def test_bag_distance_of_different_sizes():
    assert distance((1,), (1, 1, 1), BagShape(INT)) == ExtReal.of(2)
    assert distance((), (4, 5), BagShape(INT)) == ExtReal.of(2)


def test_bag_of_vectors_matches_up_to_permutation():
    rows_a = ((1.0, 2.0), (3.0, 4.0))
    rows_b = ((3.0, 4.0), (1.0, 2.0))
    assert distance(rows_a, rows_b, BagShape(VectorShape(FLOAT))) == ZERO_SENS
    rows_c = ((3.0, 4.0), (1.0, 9.0))
    assert distance(rows_a, rows_c, BagShape(VectorShape(FLOAT))) == ExtReal.of(2)


# Small pools so random bags actually collide.
_elems = st.sampled_from([0, 1, 2, 3])
_bags = st.lists(_elems, max_size=6).map(tuple)
_vec_elems = st.lists(_elems, min_size=2, max_size=2).map(tuple)
_vec_bags = st.lists(_vec_elems, max_size=5).map(tuple)


@given(_bags, _bags)
def test_bag_distance_matches_bruteforce(a, b):
    got = distance(a, b, BagShape(INT))
    assert got == ExtReal.of(bag_distance_bf(a, b))


@given(_vec_bags, _vec_bags)
def test_nested_bag_distance_matches_bruteforce(a, b):
    got = distance(a, b, BagShape(VectorShape(INT)))
    assert got == ExtReal.of(bag_distance_bf(a, b))


@given(_bags, _bags)
def test_bag_distance_symmetric_and_bounded(a, b):
    d = distance(a, b, BagShape(INT))
    assert d == distance(b, a, BagShape(INT))
    assert ExtReal.of(abs(len(a) - len(b))) <= d <= ExtReal.of(len(a) + len(b))


@given(_bags, st.randoms(use_true_random=False))
def test_bag_distance_permutation_invariant(a, rnd):
    shuffled = list(a)
    rnd.shuffle(shuffled)
    assert distance(a, tuple(shuffled), BagShape(INT)) == ZERO_SENS


@given(_bags, _bags, _bags)
def test_bag_distance_triangle(a, b, c):
    ab = distance(a, b, BagShape(INT))
    bc = distance(b, c, BagShape(INT))
    ac = distance(a, c, BagShape(INT))
    assert ac <= ab + bc


_floats = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6)
_vectors = st.lists(_floats, min_size=3, max_size=3).map(tuple)


@given(_vectors, _vectors, _vectors)
def test_vector_distance_triangle(a, b, c):
    ab = distance(a, b, VectorShape(FLOAT)).to_float()
    bc = distance(b, c, VectorShape(FLOAT)).to_float()
    ac = distance(a, c, VectorShape(FLOAT)).to_float()
    assert ac <= ab + bc + 1e-9


@given(_vectors, _vectors)
def test_vector_distance_matches_oracle(a, b):
    assert distance(a, b, VectorShape(FLOAT)).to_float() == pytest.approx(
        vector_distance(a, b)
    )


# ------------------------------------------------------------
# Shapes, defaults, JSON round trips
# ------------------------------------------------------------

_shapes = st.recursive(
    st.sampled_from([INT, FLOAT, BOOL]),
    lambda inner: st.one_of(inner.map(VectorShape), inner.map(BagShape)),
    max_leaves=3,
)


@given(_shapes)
def test_default_value_is_well_shaped(shape):
    assert well_shaped(default_value(shape), shape)


def _values_of(shape):
    if shape == INT:
        return st.integers(-100, 100)
    if shape == FLOAT:
        return _floats
    if shape == BOOL:
        return st.booleans()
    return st.lists(_values_of(shape.elem), max_size=4).map(tuple)


@given(_shapes.flatmap(lambda s: st.tuples(st.just(s), _values_of(s))))
def test_value_json_round_trip(pair):
    shape, v = pair
    encoded = json.loads(json.dumps(value_to_json(v, shape)))
    assert value_from_json(encoded, shape) == v


def test_value_from_json_rejects_mismatches():
    with pytest.raises(ValueError):
        value_from_json("no", INT)
    with pytest.raises(ValueError):
        value_from_json(True, INT)
    with pytest.raises(ValueError):
        value_from_json([1.0], BagShape(FLOAT))  # bags need the {"bag": ...} wrapper


def test_well_shaped_rejects_bool_as_int():
    assert not well_shaped(True, INT)
    assert well_shaped(True, BOOL)
