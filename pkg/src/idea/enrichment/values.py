"""Value semantics for query evaluation: comparisons, three-valued logic,
arithmetic, ordering and hashable keys."""

from __future__ import annotations

import math

from ..datamodel import (
    INT64_MAX,
    INT64_MIN,
    MISSING,
    Circle,
    DateTime,
    Duration,
    Point,
    Rectangle,
    datetime_plus_duration,
    kind_of,
)
from ..errors import ArgumentTypeError

# category codes used for cross-type decisions
_NUM, _STR, _BOOL, _DT, _DUR, _GEO, _ARR, _OBJ = range(8)


def category(v):
    t = type(v)
    if t is str:
        return _STR
    if t is int or t is float:
        return _NUM
    if t is bool:
        return _BOOL
    if t is DateTime:
        return _DT
    if t is Duration:
        return _DUR
    if t is Point or t is Rectangle or t is Circle:
        return _GEO
    if t is list or t is tuple:
        return _ARR
    if t is dict:
        return _OBJ
    return None


def deep_equal(a, b):
    ca, cb = category(a), category(b)
    if ca != cb:
        return False
    if ca == _ARR:
        return len(a) == len(b) and all(deep_equal(x, y) for x, y in zip(a, b))
    if ca == _OBJ:
        return a.keys() == b.keys() and all(deep_equal(a[k], b[k]) for k in a)
    return a == b


def eq(a, b):
    """SQL-style equality: MISSING and NULL propagate, unlike kinds give NULL."""
    ta, tb = type(a), type(b)
    if ta is tb and (ta is str or ta is int):
        return a == b
    if a is MISSING or b is MISSING:
        return MISSING
    if a is None or b is None:
        return None
    ca, cb = category(a), category(b)
    if ca != cb:
        return None
    if ca == _ARR or ca == _OBJ:
        return deep_equal(a, b)
    return a == b


def compare(a, b):
    """-1/0/1, or None when the values have no order relation."""
    ca, cb = category(a), category(b)
    if ca != cb or ca is None:
        return None
    if ca in (_NUM, _STR, _BOOL, _DT):
        return -1 if a < b else (1 if a > b else 0)
    return None


def _cmp_op(test):
    def op(a, b):
        ta, tb = type(a), type(b)
        if ta is tb and (ta is str or ta is int or ta is float):
            return test(-1 if a < b else (1 if a > b else 0))
        if a is MISSING or b is MISSING:
            return MISSING
        if a is None or b is None:
            return None
        c = compare(a, b)
        return None if c is None else test(c)
    return op


def ne(a, b):
    r = eq(a, b)
    return r if r is None or r is MISSING else not r


COMPARISONS = {
    "=": eq,
    "!=": ne,
    "<": _cmp_op(lambda c: c < 0),
    "<=": _cmp_op(lambda c: c <= 0),
    ">": _cmp_op(lambda c: c > 0),
    ">=": _cmp_op(lambda c: c >= 0),
}


# -- three-valued logic -------------------------------------------------------------------

def _bool_or_unknown(v):
    if v is True or v is False or v is MISSING or v is None:
        return v
    raise ArgumentTypeError(f"expected a boolean, got {kind_of(v)}")


def and3(a, b):
    a = _bool_or_unknown(a)
    b = _bool_or_unknown(b)
    if a is False or b is False:
        return False
    if a is MISSING or b is MISSING:
        return MISSING
    if a is None or b is None:
        return None
    return True


def or3(a, b):
    a = _bool_or_unknown(a)
    b = _bool_or_unknown(b)
    if a is True or b is True:
        return True
    if a is MISSING or b is MISSING:
        return MISSING
    if a is None or b is None:
        return None
    return False


def not3(a):
    a = _bool_or_unknown(a)
    if a is True:
        return False
    if a is False:
        return True
    return a


# -- arithmetic -----------------------------------------------------------------------------

def _check_int(v):
    if type(v) is int and (v < INT64_MIN or v > INT64_MAX):
        raise ArgumentTypeError("Int64 overflow")
    return v


def _is_num(v):
    t = type(v)
    return t is int or t is float


def arith(op, a, b):
    if a is MISSING or b is MISSING:
        return MISSING
    if a is None or b is None:
        return None
    if _is_num(a) and _is_num(b):
        if op == "+":
            return _check_int(a + b)
        if op == "-":
            return _check_int(a - b)
        if op == "*":
            return _check_int(a * b)
        if op == "/":
            if b == 0:
                return None
            return a / b
        if op == "%":
            if b == 0:
                return None
            if type(a) is int and type(b) is int:
                r = abs(a) % abs(b)
                return -r if a < 0 else r
            return math.fmod(a, b)
    ta, tb = type(a), type(b)
    if op == "+":
        if ta is DateTime and tb is Duration:
            return datetime_plus_duration(a, b)
        if ta is Duration and tb is DateTime:
            return datetime_plus_duration(b, a)
        if ta is Duration and tb is Duration:
            return Duration(a.months + b.months, a.millis + b.millis)
    if op == "-":
        if ta is DateTime and tb is Duration:
            return datetime_plus_duration(a, Duration(-b.months, -b.millis))
        if ta is DateTime and tb is DateTime:
            return Duration(0, a.millis - b.millis)
    raise ArgumentTypeError(f"cannot apply {op!r} to {kind_of(a)} and {kind_of(b)}")


def negate(a):
    if a is MISSING or a is None:
        return a
    if _is_num(a):
        return _check_int(-a)
    if type(a) is Duration:
        return Duration(-a.months, -a.millis)
    raise ArgumentTypeError(f"cannot negate {kind_of(a)}")


def concat(a, b):
    if a is MISSING or b is MISSING:
        return MISSING
    if a is None or b is None:
        return None
    if type(a) is str and type(b) is str:
        return a + b
    raise ArgumentTypeError(f"cannot concatenate {kind_of(a)} and {kind_of(b)}")


# -- total order and hashable forms ------------------------------------------------------------

_RANK = {"missing": 0, "null": 1, "boolean": 2, "int64": 3, "double": 3, "string": 4,
         "datetime": 5, "duration": 6, "point": 7, "rectangle": 8, "circle": 9, "array": 10,
         "object": 11}


def order_key(v):
    """Key placing every value in one total order (used by ORDER BY)."""
    t = type(v)
    if t is int or t is float:
        return (3, v)
    if t is str:
        return (4, v)
    if v is MISSING:
        return (0,)
    if v is None:
        return (1,)
    if t is bool:
        return (2, v)
    if t is DateTime:
        return (5, v.millis)
    if t is Duration:
        return (6, v.months, v.millis)
    if t is Point:
        return (7, v.x, v.y)
    if t is Rectangle:
        return (8, v.lower_left.x, v.lower_left.y, v.upper_right.x, v.upper_right.y)
    if t is Circle:
        return (9, v.center.x, v.center.y, v.radius)
    if t is list or t is tuple:
        return (10, tuple(order_key(x) for x in v))
    if t is dict:
        return (11, tuple((k, order_key(v[k])) for k in sorted(v)))
    raise ArgumentTypeError(f"cannot order {t.__name__}")


def freeze(v):
    """Hashable form where equal values (in the ``=`` sense) collide."""
    t = type(v)
    if t is str:
        return v
    if t is int:
        return v
    if t is float:
        return int(v) if v.is_integer() else v
    if t is bool:
        return ("\x00b", v)
    if v is None or v is MISSING:
        return ("\x00n", repr(v))
    if t is list or t is tuple:
        return ("\x00a",) + tuple(freeze(x) for x in v)
    if t is dict:
        return ("\x00o",) + tuple((k, freeze(v[k])) for k in sorted(v))
    return v  # frozen dataclasses hash by value


def join_key(v):
    """Equality key for hash joins; None when the value can never match."""
    if v is None or v is MISSING:
        return None
    return freeze(v)


def truthy(v):
    return v is True
