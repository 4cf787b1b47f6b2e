"""Open-record data model.

Records are plain ``dict`` objects with string keys; scalar values map onto
Python types (``int`` for Int64, ``float`` for Float64, ``str``, ``bool``,
``None`` for Null). Geometry and temporal values are small frozen
dataclasses. ``MISSING`` stands for an absent field and never survives
serialization.

Records are treated as immutable once built: enrichment always produces a
copy, so they can be shared between threads without coordination.
"""

from __future__ import annotations

import calendar
import json
import math
import re
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import msgpack

from .errors import (
    ArgumentTypeError,
    CorruptRecord,
    MissingKeyField,
    ParseError,
    ValidationError,
)

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ArgumentTypeError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True, slots=True)
class Rectangle:
    lower_left: Point
    upper_right: Point

    def __post_init__(self):
        ll, ur = self.lower_left, self.upper_right
        if ll.x > ur.x or ll.y > ur.y:
            raise ArgumentTypeError("rectangle lower-left must not exceed upper-right")


@dataclass(frozen=True, slots=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ArgumentTypeError(f"circle radius must be positive, got {self.radius}")


# 0001-01-01T00:00:00.000Z and 9999-12-31T23:59:59.999Z
_MIN_MILLIS = -62_135_596_800_000
_MAX_MILLIS = 253_402_300_799_999


@dataclass(frozen=True, slots=True, order=True)
class DateTime:
    millis: int

    def __post_init__(self):
        if not _MIN_MILLIS <= self.millis <= _MAX_MILLIS:
            raise ArgumentTypeError(f"datetime {self.millis} ms is outside years 1-9999")

    def __str__(self):
        return format_datetime(self)


@dataclass(frozen=True, slots=True)
class Duration:
    months: int
    millis: int

    def __str__(self):
        return format_duration(self)


# ---------------------------------------------------------------------------
# kinds

SCALAR_KINDS = ("int64", "double", "string", "boolean", "datetime")

_KIND_ALIASES = {
    "int": "int64", "int8": "int64", "int16": "int64", "int32": "int64",
    "int64": "int64", "bigint": "int64", "integer": "int64",
    "double": "double", "float": "double",
    "string": "string", "boolean": "boolean",
    "point": "point", "rectangle": "rectangle", "circle": "circle",
    "datetime": "datetime", "duration": "duration",
    "any": "any",
}


def normalize_kind(name):
    try:
        return _KIND_ALIASES[name.lower()]
    except KeyError:
        raise ValidationError([f"unknown field type {name!r}"]) from None


def kind_of(value):
    if value is MISSING:
        return "missing"
    if value is None:
        return "null"
    if value is True or value is False:
        return "boolean"
    t = type(value)
    if t is int:
        return "int64"
    if t is float:
        return "double"
    if t is str:
        return "string"
    if t is dict:
        return "object"
    if t is list or t is tuple:
        return "array"
    if t is Point:
        return "point"
    if t is Rectangle:
        return "rectangle"
    if t is Circle:
        return "circle"
    if t is DateTime:
        return "datetime"
    if t is Duration:
        return "duration"
    raise ArgumentTypeError(f"not a data-model value: {value!r}")


def _kind_matches(value, kind):
    actual = kind_of(value)
    if kind == "any" or actual == kind:
        return True
    # ints are accepted where doubles are declared
    return kind == "double" and actual == "int64"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    optional: bool = False


@dataclass(frozen=True)
class Datatype:
    name: str
    fields: tuple = ()
    open: bool = True

    def field(self, name):
        for f in self.fields:
            if f.name == name:
                return f
        return None


def validate(record, datatype):
    """Return ``record`` unchanged if it conforms to ``datatype``."""
    if type(record) is not dict:
        raise ValidationError(["value is not a record"], datatype.name)
    problems = []
    for f in datatype.fields:
        v = record.get(f.name, MISSING)
        if v is MISSING or v is None:
            if not f.optional:
                problems.append(f"missing required field {f.name!r}")
        elif not _kind_matches(v, f.kind):
            problems.append(f"field {f.name!r} should be {f.kind}, got {kind_of(v)}")
    if not datatype.open:
        declared = {f.name for f in datatype.fields}
        for name in record:
            if name not in declared:
                problems.append(f"closed type does not admit field {name!r}")
    if problems:
        raise ValidationError(problems, datatype.name)
    return record


def get_path(value, path):
    """Follow ``path`` (a sequence of field names) through nested records."""
    for name in path:
        if type(value) is not dict:
            return MISSING
        value = value.get(name, MISSING)
    return value


# ---------------------------------------------------------------------------
# temporal values

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def parse_datetime(text):
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise ArgumentTypeError(f"invalid datetime {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return DateTime(delta.days * 86_400_000 + delta.seconds * 1000 + delta.microseconds // 1000)


def _to_datetime(dt):
    return _EPOCH + timedelta(milliseconds=dt.millis)


def format_datetime(dt):
    d = _to_datetime(dt)
    return f"{d.year:04d}-{d:%m-%dT%H:%M:%S}.{d.microsecond // 1000:03d}Z"


_DURATION_RE = re.compile(
    r"^(-)?P(?:(\d+)Y)?(?:(\d+)M)?(?:(\d+)W)?(?:(\d+)D)?"
    r"(?:T(?:(\d+)H)?(?:(\d+)M)?(?:(\d+(?:\.\d{1,3})?)S)?)?$"
)


def parse_duration(text):
    m = _DURATION_RE.match(text.strip())
    if not m or text.strip() in ("P", "-P") or text.strip().endswith("T"):
        raise ArgumentTypeError(f"invalid duration {text!r}")
    neg, years, months, weeks, days, hours, minutes, seconds = m.groups()
    total_months = int(years or 0) * 12 + int(months or 0)
    millis = (int(weeks or 0) * 7 + int(days or 0)) * 86_400_000
    millis += (int(hours or 0) * 60 + int(minutes or 0)) * 60_000
    if seconds:
        whole, _, frac = seconds.partition(".")
        millis += int(whole) * 1000 + int((frac + "000")[:3])
    if neg:
        total_months, millis = -total_months, -millis
    return Duration(total_months, millis)


def format_duration(d):
    months, millis = d.months, d.millis
    sign = ""
    if months < 0 or millis < 0:
        if months > 0 or millis > 0:
            raise ArgumentTypeError("mixed-sign durations have no ISO form")
        sign, months, millis = "-", -months, -millis
    out = sign + "P"
    years, months = divmod(months, 12)
    if years:
        out += f"{years}Y"
    if months:
        out += f"{months}M"
    days, rem = divmod(millis, 86_400_000)
    if days:
        out += f"{days}D"
    hours, rem = divmod(rem, 3_600_000)
    minutes, rem = divmod(rem, 60_000)
    secs, ms = divmod(rem, 1000)
    if hours or minutes or secs or ms:
        out += "T"
        if hours:
            out += f"{hours}H"
        if minutes:
            out += f"{minutes}M"
        if secs or ms:
            out += f"{secs}.{ms:03d}S" if ms else f"{secs}S"
    if out in ("P", "-P"):
        out = "PT0S"
    return out


def add_months(dt, months):
    d = _to_datetime(dt)
    y, m = divmod(d.month - 1 + months, 12)
    year, month = d.year + y, m + 1
    if not 1 <= year <= 9999:
        raise ArgumentTypeError(f"adding {months} months leaves years 1-9999")
    day = min(d.day, calendar.monthrange(year, month)[1])
    shifted = d.replace(year=year, month=month, day=day)
    delta = shifted - _EPOCH
    return DateTime(delta.days * 86_400_000 + delta.seconds * 1000 + delta.microseconds // 1000)


def datetime_plus_duration(dt, dur):
    """Calendar month arithmetic first, then the millisecond part."""
    if dur.months:
        dt = add_months(dt, dur.months)
    return DateTime(dt.millis + dur.millis)


# ---------------------------------------------------------------------------
# JSON

def _wrap_point(v):
    x, y = v
    return Point(float(x), float(y))


def _wrap_rectangle(v):
    (x1, y1), (x2, y2) = v
    return Rectangle(Point(float(x1), float(y1)), Point(float(x2), float(y2)))


def _wrap_circle(v):
    (x, y), r = v
    return Circle(Point(float(x), float(y)), float(r))


_WRAPPERS = {
    "$point": _wrap_point,
    "$rectangle": _wrap_rectangle,
    "$circle": _wrap_circle,
    "$datetime": lambda v: parse_datetime(v),
    "$duration": lambda v: parse_duration(v),
}


class _BadJson(Exception):
    def __init__(self, reason, anchor=None):
        super().__init__(reason)
        self.reason = reason
        self.anchor = anchor


def _object_hook(d):
    if len(d) == 1:
        for key, v in d.items():
            conv = _WRAPPERS.get(key)
            if conv is not None:
                try:
                    return conv(v)
                except Exception as e:  # malformed wrapper payload
                    raise _BadJson(f"bad {key} value: {e}", key) from None
    return d


def _parse_int(s):
    v = int(s)
    if v < INT64_MIN or v > INT64_MAX:
        raise _BadJson(f"integer {s} out of Int64 range", s)
    return v


def _reject_constant(name):
    raise _BadJson(f"non-finite number {name}", name)


def parse_json(text):
    """Parse one JSON object into a record.

    Numbers without fraction or exponent become Int64, all others Float64.
    Extended values use single-key wrappers such as ``{"$point": [x, y]}``.
    Repeated field names keep the last value, as most JSON readers do.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(e.start, "invalid UTF-8") from None
    try:
        if '"$' in text:
            value = json.loads(text, object_hook=_object_hook, parse_int=_parse_int,
                               parse_constant=_reject_constant)
        else:
            value = json.loads(text, parse_int=_parse_int, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(e.pos, e.msg) from None
    except _BadJson as e:
        pos = text.find(str(e.anchor)) if e.anchor is not None else -1
        raise ParseError(max(pos, 0), e.reason) from None
    except RecursionError:
        raise ParseError(0, "nesting too deep") from None
    if type(value) is not dict:
        raise ParseError(0, "top-level value is not an object")
    return value


class _HasMissing(Exception):
    pass


def _json_default(v):
    t = type(v)
    if t is Point:
        return {"$point": [v.x, v.y]}
    if t is Rectangle:
        return {"$rectangle": [[v.lower_left.x, v.lower_left.y], [v.upper_right.x, v.upper_right.y]]}
    if t is Circle:
        return {"$circle": [[v.center.x, v.center.y], v.radius]}
    if t is DateTime:
        return {"$datetime": format_datetime(v)}
    if t is Duration:
        return {"$duration": format_duration(v)}
    if v is MISSING:
        raise _HasMissing()
    raise ArgumentTypeError(f"cannot encode {v!r} as JSON")


def strip_missing(value):
    """Drop MISSING fields from records; MISSING array items become null."""
    t = type(value)
    if t is dict:
        return {k: strip_missing(v) for k, v in value.items() if v is not MISSING}
    if t is list or t is tuple:
        return [None if v is MISSING else strip_missing(v) for v in value]
    return value


def print_json(record):
    try:
        return json.dumps(record, default=_json_default, ensure_ascii=False,
                          separators=(",", ":"), allow_nan=False)
    except _HasMissing:
        return print_json(strip_missing(record))
    except ValueError as e:
        raise ArgumentTypeError(str(e)) from None


# ---------------------------------------------------------------------------
# binary serialization (frame transport, spill files, persistence log)

_EXT_POINT, _EXT_RECT, _EXT_CIRCLE, _EXT_DATETIME, _EXT_DURATION = 1, 2, 3, 4, 5
_D2 = struct.Struct(">dd")
_D3 = struct.Struct(">ddd")
_D4 = struct.Struct(">dddd")
_Q = struct.Struct(">q")
_QQ = struct.Struct(">qq")


def _ext_default(v):
    t = type(v)
    if t is Point:
        return msgpack.ExtType(_EXT_POINT, _D2.pack(v.x, v.y))
    if t is Rectangle:
        return msgpack.ExtType(_EXT_RECT, _D4.pack(v.lower_left.x, v.lower_left.y,
                                                   v.upper_right.x, v.upper_right.y))
    if t is Circle:
        return msgpack.ExtType(_EXT_CIRCLE, _D3.pack(v.center.x, v.center.y, v.radius))
    if t is DateTime:
        return msgpack.ExtType(_EXT_DATETIME, _Q.pack(v.millis))
    if t is Duration:
        return msgpack.ExtType(_EXT_DURATION, _QQ.pack(v.months, v.millis))
    if v is MISSING:
        raise _HasMissing()
    raise ArgumentTypeError(f"cannot serialize {v!r}")


def _ext_hook(code, data):
    if code == _EXT_POINT:
        return Point(*_D2.unpack(data))
    if code == _EXT_RECT:
        x1, y1, x2, y2 = _D4.unpack(data)
        return Rectangle(Point(x1, y1), Point(x2, y2))
    if code == _EXT_CIRCLE:
        x, y, r = _D3.unpack(data)
        return Circle(Point(x, y), r)
    if code == _EXT_DATETIME:
        return DateTime(_Q.unpack(data)[0])
    if code == _EXT_DURATION:
        return Duration(*_QQ.unpack(data))
    raise CorruptRecord(f"unknown extension code {code}")


def serialize_value(value):
    try:
        return msgpack.packb(value, default=_ext_default, use_bin_type=True)
    except _HasMissing:
        return serialize_value(strip_missing(value))
    except (OverflowError, TypeError) as e:
        raise ArgumentTypeError(f"cannot serialize value: {e}") from None


def deserialize_value(data):
    try:
        return msgpack.unpackb(data, ext_hook=_ext_hook, raw=False, use_list=True,
                               strict_map_key=False)
    except CorruptRecord:
        raise
    except Exception as e:
        raise CorruptRecord(f"malformed record bytes: {e}") from None


def serialize_record(record):
    if type(record) is not dict:
        raise ArgumentTypeError("only records can be serialized as records")
    return serialize_value(record)


def deserialize_record(data):
    value = deserialize_value(data)
    if type(value) is not dict:
        raise CorruptRecord("bytes do not encode a record")
    return value


# ---------------------------------------------------------------------------
# primary keys
#
# Order-preserving encoding: a kind tag followed by a payload whose byte order
# matches value order. Text is 0x00-escaped and terminated so that multi-field
# keys concatenate without ambiguity.

_TAG_BOOL, _TAG_INT, _TAG_DOUBLE, _TAG_TEXT, _TAG_DATETIME = 0x08, 0x10, 0x11, 0x20, 0x30
_SIGN = 1 << 63
_MASK = (1 << 64) - 1
_U64 = struct.Struct(">Q")


def encode_key_value(value):
    if value is True or value is False:
        return bytes((_TAG_BOOL, 1 if value else 0))
    t = type(value)
    if t is int:
        if value < INT64_MIN or value > INT64_MAX:
            raise ArgumentTypeError(f"key integer {value} out of Int64 range")
        return bytes((_TAG_INT,)) + _U64.pack(value + _SIGN)
    if t is str:
        return bytes((_TAG_TEXT,)) + value.encode("utf-8").replace(b"\x00", b"\x00\xff") + b"\x00\x00"
    if t is float:
        if value == 0.0:
            value = 0.0  # fold -0.0
        u = _U64.unpack(struct.pack(">d", value))[0]
        u = (~u & _MASK) if u & _SIGN else (u | _SIGN)
        return bytes((_TAG_DOUBLE,)) + _U64.pack(u)
    if t is DateTime:
        return bytes((_TAG_DATETIME,)) + _U64.pack(value.millis + _SIGN)
    raise ArgumentTypeError(f"key values must be scalar, got {kind_of(value)}")


def extract_primary_key(record, key_fields):
    """Deterministic, order-preserving bytes for the record's key fields."""
    if len(key_fields) == 1:
        v = record.get(key_fields[0], MISSING) if type(record) is dict else MISSING
        if v is MISSING or v is None:
            raise MissingKeyField(key_fields[0])
        return encode_key_value(v)
    parts = []
    for name in key_fields:
        v = record.get(name, MISSING) if type(record) is dict else MISSING
        if v is MISSING or v is None:
            raise MissingKeyField(name)
        parts.append(encode_key_value(v))
    return b"".join(parts)
