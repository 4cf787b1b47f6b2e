import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.datamodel import (
    Circle,
    Datatype,
    DateTime,
    FieldSpec,
    Point,
    Rectangle,
    datetime_plus_duration,
    deserialize_record,
    extract_primary_key,
    format_datetime,
    parse_datetime,
    parse_duration,
    parse_json,
    print_json,
    serialize_record,
    validate,
)
from idea.errors import CorruptRecord, MissingKeyField, ValidationError

TWEET_TYPE = Datatype("TweetType", (FieldSpec("id", "int64"), FieldSpec("text", "string")), True)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
scalars = st.one_of(st.none(), st.booleans(), st.integers(-2**63, 2**63 - 1), finite,
                    st.text(max_size=20))
geoms = st.one_of(
    st.builds(Point, finite, finite),
    st.builds(DateTime, st.integers(-62_135_596_800_000, 253_402_300_799_999)),
    st.builds(lambda x, y, r: Circle(Point(x, y), r), finite, finite,
              st.floats(1e-6, 1e6)),
)
values = st.recursive(st.one_of(scalars, geoms),
                      lambda kids: st.one_of(st.lists(kids, max_size=4),
                                             st.dictionaries(st.text(max_size=8), kids, max_size=4)),
                      max_leaves=12)
records = st.dictionaries(st.text(max_size=8), values, max_size=6)


def test_parse_plain_tweet():
    r = parse_json('{"id":0, "text": "Let there be light"}')
    assert r == {"id": 0, "text": "Let there be light"}
    assert type(r["id"]) is int


def test_parse_empty_and_nested():
    assert parse_json("{}") == {}
    r = parse_json('{"a":[1,{"b":2.5}]}')
    assert r == {"a": [1, {"b": 2.5}]}
    assert type(r["a"][0]) is int and type(r["a"][1]["b"]) is float


def test_validate_open_type():
    validate({"id": 0, "text": "x", "country": "US"}, TWEET_TYPE)
    with pytest.raises(ValidationError):
        validate({"text": "x"}, TWEET_TYPE)
    with pytest.raises(ValidationError):
        validate({"id": "zero", "text": "x"}, TWEET_TYPE)


def test_closed_type_rejects_extra_fields():
    closed = Datatype("C", (FieldSpec("id", "int64"),), False)
    validate({"id": 1}, closed)
    with pytest.raises(ValidationError):
        validate({"id": 1, "x": 2}, closed)


def test_primary_key_bytes():
    a = extract_primary_key({"id": 7, "text": "a"}, ["id"])
    assert a == extract_primary_key({"id": 7, "text": "b"}, ["id"])
    assert isinstance(a, bytes)
    with pytest.raises(MissingKeyField):
        extract_primary_key({"text": "x"}, ["id"])


def test_serialize_round_trip_with_geometry():
    r = {"id": 3, "loc": Point(1.5, -2.0), "at": parse_datetime("2019-03-01T10:00:00Z"),
         "area": Rectangle(Point(0, 0), Point(1, 2))}
    assert deserialize_record(serialize_record(r)) == r


def test_truncated_bytes_are_corrupt():
    data = serialize_record({"id": 1, "text": "abc"})
    with pytest.raises(CorruptRecord):
        deserialize_record(data[:-2])


def test_month_arithmetic_clamps_to_month_end():
    jan31 = parse_datetime("2019-01-31T00:00:00Z")
    assert format_datetime(datetime_plus_duration(jan31, parse_duration("P1M"))) == \
        "2019-02-28T00:00:00.000Z"
    leap = parse_datetime("2020-01-31T12:00:00Z")
    assert format_datetime(datetime_plus_duration(leap, parse_duration("P1M"))) == \
        "2020-02-29T12:00:00.000Z"
    assert format_datetime(datetime_plus_duration(jan31, parse_duration("P2M"))) == \
        "2019-03-31T00:00:00.000Z"


def test_invalid_geometry_rejected():
    with pytest.raises(Exception):
        Point(math.nan, 0)
    with pytest.raises(Exception):
        Circle(Point(0, 0), 0)


def test_datetime_bounds():
    assert format_datetime(parse_datetime("0001-01-01T00:00:00Z")) == "0001-01-01T00:00:00.000Z"
    last = parse_datetime("9999-12-31T23:59:59.999Z")
    with pytest.raises(Exception):
        DateTime(last.millis + 1)
    with pytest.raises(Exception):
        datetime_plus_duration(last, parse_duration("P1M"))


@given(records)
@settings(max_examples=200, deadline=None)
def test_serialize_round_trip(r):
    assert deserialize_record(serialize_record(r)) == r


@given(records)
@settings(max_examples=200, deadline=None)
def test_json_round_trip_preserves_order(r):
    back = parse_json(print_json(r))
    assert back == r
    assert list(back) == list(r)


@given(st.integers(-2**63, 2**63 - 1), st.integers(-2**63, 2**63 - 1))
def test_integer_keys_injective(a, b):
    ka = extract_primary_key({"id": a}, ["id"])
    kb = extract_primary_key({"id": b}, ["id"])
    assert (ka == kb) == (a == b)


@given(st.text(max_size=12), st.text(max_size=12))
def test_string_keys_injective(a, b):
    ka = extract_primary_key({"k": a}, ["k"])
    kb = extract_primary_key({"k": b}, ["k"])
    assert (ka == kb) == (a == b)


@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_integer_key_bytes_sort_like_integers(a, b):
    ka = extract_primary_key({"id": a}, ["id"])
    kb = extract_primary_key({"id": b}, ["id"])
    assert (ka < kb) == (a < b)
