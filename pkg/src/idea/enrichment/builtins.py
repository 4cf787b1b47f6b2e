"""Scalar builtin functions and collection aggregates."""

from __future__ import annotations

from ..datamodel import (
    MISSING,
    Circle,
    DateTime,
    Duration,
    Point,
    Rectangle,
    datetime_plus_duration,
    kind_of,
    parse_datetime,
    parse_duration,
)
from ..errors import ArgumentTypeError
from ..geometry import spatial_distance as _spatial_distance
from ..geometry import spatial_intersect as _spatial_intersect
from .values import compare, order_key

# name -> (callable, min_args, max_args, propagate_unknowns)
BUILTINS = {}


def builtin(name, nargs, propagate=True, max_args=None):
    def deco(fn):
        BUILTINS[name] = (fn, nargs, nargs if max_args is None else max_args, propagate)
        return fn
    return deco


def _expect(v, t, what):
    if type(v) is not t:
        raise ArgumentTypeError(f"{what} expects {t.__name__}, got {kind_of(v)}")
    return v


def _num(v, what):
    if type(v) is int or type(v) is float:
        return v
    raise ArgumentTypeError(f"{what} expects a number, got {kind_of(v)}")


# -- strings ----------------------------------------------------------------------------------

@builtin("contains", 2)
def contains(text, sub):
    _expect(text, str, "contains")
    _expect(sub, str, "contains")
    return sub in text


def levenshtein(a, b):
    """Unit-cost edit distance by the two-row dynamic program."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        left = i
        for j, cb in enumerate(b, 1):
            up = prev[j]
            v = prev[j - 1] + (ca != cb)
            if up + 1 < v:
                v = up + 1
            if left + 1 < v:
                v = left + 1
            cur.append(v)
            left = v
        prev = cur
    return prev[-1]


@builtin("edit_distance", 2)
def edit_distance(a, b):
    if type(a) is str and type(b) is str:
        return levenshtein(a, b)
    if type(a) is list and type(b) is list:
        return levenshtein(a, b)
    raise ArgumentTypeError(f"edit_distance expects two strings, got {kind_of(a)} and {kind_of(b)}")


@builtin("lowercase", 1)
def lowercase(s):
    return _expect(s, str, "lowercase").lower()


@builtin("uppercase", 1)
def uppercase(s):
    return _expect(s, str, "uppercase").upper()


@builtin("string_length", 1)
def string_length(s):
    return len(_expect(s, str, "string_length"))


@builtin("starts_with", 2)
def starts_with(s, prefix):
    return _expect(s, str, "starts_with").startswith(_expect(prefix, str, "starts_with"))


# -- spatial ----------------------------------------------------------------------------------

@builtin("create_point", 2)
def create_point(x, y):
    return Point(float(_num(x, "create_point")), float(_num(y, "create_point")))


@builtin("create_circle", 2)
def create_circle(center, radius):
    _expect(center, Point, "create_circle")
    return Circle(center, float(_num(radius, "create_circle")))


@builtin("create_rectangle", 2)
def create_rectangle(lower_left, upper_right):
    _expect(lower_left, Point, "create_rectangle")
    _expect(upper_right, Point, "create_rectangle")
    return Rectangle(lower_left, upper_right)


@builtin("spatial_intersect", 2)
def spatial_intersect(a, b):
    return _spatial_intersect(a, b)


@builtin("spatial_distance", 2)
def spatial_distance(p, q):
    return _spatial_distance(p, q)


@builtin("get_x", 1)
def get_x(p):
    return _expect(p, Point, "get_x").x


@builtin("get_y", 1)
def get_y(p):
    return _expect(p, Point, "get_y").y


# -- temporal ---------------------------------------------------------------------------------

@builtin("duration", 1)
def duration(text):
    return parse_duration(_expect(text, str, "duration"))


@builtin("datetime", 1)
def datetime_(text):
    return parse_datetime(_expect(text, str, "datetime"))


@builtin("datetime_plus_duration", 2)
def datetime_plus_duration_(dt, dur):
    _expect(dt, DateTime, "datetime_plus_duration")
    _expect(dur, Duration, "datetime_plus_duration")
    return datetime_plus_duration(dt, dur)


@builtin("datetime_compare", 2)
def datetime_compare(a, b):
    _expect(a, DateTime, "datetime_compare")
    _expect(b, DateTime, "datetime_compare")
    return compare(a, b)


# -- numeric ----------------------------------------------------------------------------------

@builtin("abs", 1)
def abs_(v):
    return abs(_num(v, "abs"))


# -- type tests (no unknown propagation) --------------------------------------------------------

@builtin("is_missing", 1, propagate=False)
def is_missing(v):
    return v is MISSING


@builtin("is_null", 1, propagate=False)
def is_null(v):
    return v is None


@builtin("is_unknown", 1, propagate=False)
def is_unknown(v):
    return v is None or v is MISSING


# -- collection aggregates -------------------------------------------------------------------------

def _known(values):
    return [v for v in values if v is not None and v is not MISSING]


def agg_count(values):
    return len(_known(values))


def agg_sum(values):
    vals = _known(values)
    if not vals:
        return None
    total = 0
    for v in vals:
        total = total + _num(v, "sum")
    return total


def agg_avg(values):
    vals = _known(values)
    if not vals:
        return None
    return agg_sum(vals) / len(vals)


def agg_min(values):
    vals = _known(values)
    if not vals:
        return None
    return min(vals, key=order_key)


def agg_max(values):
    vals = _known(values)
    if not vals:
        return None
    return max(vals, key=order_key)


AGGREGATES = {"count": agg_count, "sum": agg_sum, "avg": agg_avg, "min": agg_min, "max": agg_max}

for _name, _fn in AGGREGATES.items():
    def _collection(coll, _fn=_fn, _name=_name):
        if type(coll) is not list:
            raise ArgumentTypeError(f"array_{_name} expects an array, got {kind_of(coll)}")
        return _fn(coll)
    BUILTINS["array_" + _name] = (_collection, 1, 1, True)


def call_builtin(name, args):
    fn, lo, hi, propagate = BUILTINS[name]
    if propagate:
        for a in args:
            if a is MISSING:
                return MISSING
        for a in args:
            if a is None:
                return None
    return fn(*args)
