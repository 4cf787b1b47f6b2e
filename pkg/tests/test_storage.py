import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.datamodel import Circle, Datatype, FieldSpec, Point, extract_primary_key
from idea.errors import DuplicateKey, UnknownIndex
from idea.hashing import partition_of
from idea.storage import IndexKind, RTree, Storage

SAFETY = Datatype("SafetyRatingType", (FieldSpec("country_code", "string"),
                                       FieldSpec("safety_rating", "string")), True)
WORDS = Datatype("SensitiveWordType", (FieldSpec("wid", "string"), FieldSpec("country", "string"),
                                       FieldSpec("word", "string")), True)
PLACES = Datatype("P", (FieldSpec("pid", "int64"), FieldSpec("loc", "point", True),
                        FieldSpec("score", "int64", True)), True)


@pytest.fixture
def storage():
    s = Storage(nodes=4)
    yield s
    s.close()


def test_upsert_replaces(storage):
    ds = storage.create_dataset("SafetyRatings", SAFETY, ["country_code"])
    ds.upsert({"country_code": "US", "safety_rating": "3"})
    ds.upsert({"country_code": "US", "safety_rating": "4"})
    assert ds.read_by_key("US")["safety_rating"] == "4"
    assert ds.count() == 1


def test_insert_duplicate_and_read_back(storage):
    ds = storage.create_dataset("SafetyRatings", SAFETY, ["country_code"])
    rec = {"country_code": "FR", "safety_rating": "2"}
    ds.insert(rec)
    assert ds.read_by_key("FR") == rec
    with pytest.raises(DuplicateKey):
        ds.insert(rec)
    assert ds.read_by_key("XX") is None


def test_scan_is_key_ordered_per_partition(storage):
    ds = storage.create_dataset("Words", WORDS, ["wid"])
    for i in random.Random(1).sample(range(100), 100):
        ds.upsert({"wid": f"w{i:03d}", "country": "US", "word": "x"})
    assert ds.count() == 100
    for p in range(ds.partition_count):
        keys = [r["wid"] for r in ds.scan_partition(p)]
        assert keys == sorted(keys)
    assert sorted(r["wid"] for r in ds.scan()) == [f"w{i:03d}" for i in range(100)]


def test_scan_sees_upsert_ahead_of_it(storage):
    ds = storage.create_dataset("Words", WORDS, ["wid"], partitions=1)
    ds.bulk_load([{"wid": f"w{i:03d}", "country": "US", "word": "old"} for i in range(50)])
    it = ds.scan()
    first = next(it)
    assert first["wid"] == "w000"
    ds.upsert({"wid": "w040", "country": "US", "word": "new"})
    rest = {r["wid"]: r["word"] for r in it}
    assert rest["w040"] == "new"


def test_btree_lookup(storage):
    ds = storage.create_dataset("Words", WORDS, ["wid"])
    rnd = random.Random(3)
    for i in range(300):
        ds.upsert({"wid": f"w{i}", "country": rnd.choice(["US", "FR", "DE"]), "word": "x"})
    storage.create_index("Words", "countryIdx", IndexKind.BTREE, "country")
    got = sorted(r["wid"] for r in ds.index_lookup("countryIdx", "US"))
    assert got == sorted(r["wid"] for r in ds.scan() if r["country"] == "US")
    assert ds.index_lookup("countryIdx", "ZZ") == []
    with pytest.raises(UnknownIndex):
        ds.index_lookup("nope", "US")


def test_rtree_lookup(storage):
    ds = storage.create_dataset("Places", PLACES, ["pid"])
    storage.create_index("Places", "locIdx", IndexKind.RTREE, "loc")
    assert ds.index_lookup_circle("locIdx", Circle(Point(0, 0), 1.5)) == []
    rnd = random.Random(4)
    for i in range(1000):
        ds.upsert({"pid": i, "loc": Point(rnd.uniform(-10, 10), rnd.uniform(-10, 10))})
    c = Circle(Point(0, 0), 1.5)
    got = sorted(r["pid"] for r in ds.index_lookup_circle("locIdx", c))
    assert got == sorted(r["pid"] for r in ds.scan()
                         if r["loc"].x ** 2 + r["loc"].y ** 2 <= 1.5 ** 2)
    everything = ds.index_lookup_circle("locIdx", Circle(Point(0, 0), 100))
    assert len(everything) == 1000


def test_log_replay(tmp_path):
    s = Storage(nodes=2, log_dir=str(tmp_path))
    ds = s.create_dataset("SafetyRatings", SAFETY, ["country_code"])
    ds.insert({"country_code": "US", "safety_rating": "1"})
    ds.upsert({"country_code": "US", "safety_rating": "5"})
    ds.insert({"country_code": "FR", "safety_rating": "2"})
    s.close()
    s2 = Storage(nodes=2, log_dir=str(tmp_path))
    ds2 = s2.create_dataset("SafetyRatings", SAFETY, ["country_code"])
    assert ds2.read_by_key("US")["safety_rating"] == "5"
    assert ds2.count() == 2
    s2.close()


def test_commit_sequence_is_global(storage):
    a = storage.create_dataset("A", SAFETY, ["country_code"])
    b = storage.create_dataset("B", SAFETY, ["country_code"])
    s1 = a.upsert({"country_code": "US", "safety_rating": "1"})
    s2 = b.upsert({"country_code": "US", "safety_rating": "1"})
    assert s2 > s1 and storage.last_commit() == s2


ops = st.lists(st.tuples(st.integers(0, 60), st.one_of(st.none(), st.integers(0, 30)),
                         st.one_of(st.none(), st.tuples(st.integers(-20, 20),
                                                        st.integers(-20, 20)))),
               min_size=1, max_size=120)


@given(ops, st.integers(1, 4), st.booleans())
@settings(max_examples=60, deadline=None)
def test_indexes_match_scan_after_upserts(writes, parts, bulk_first):
    s = Storage(nodes=parts)
    ds = s.create_dataset("P", PLACES, ["pid"])
    if bulk_first:
        ds.bulk_load([{"pid": 1000 + i, "score": i % 7, "loc": Point(i % 5, i % 3)}
                      for i in range(40)])
    s.create_index("P", "scoreIdx", IndexKind.BTREE, "score")
    s.create_index("P", "locIdx", IndexKind.RTREE, "loc")
    for pid, score, loc in writes:
        rec = {"pid": pid}
        if score is not None:
            rec["score"] = score
        if loc is not None:
            rec["loc"] = Point(*loc)
        ds.upsert(rec)
    rows = list(ds.scan())
    assert ds.check_indexes()
    for lo, hi in ((0, 30), (5, 5), (10, 12)):
        got = sorted(r["pid"] for r in ds.index_lookup("scoreIdx", lo, hi))
        assert got == sorted(r["pid"] for r in rows
                             if r.get("score") is not None and lo <= r["score"] <= hi)
    for cx, cy, rad in ((0, 0, 5), (10, -10, 8), (3, 1, 0.5)):
        got = sorted(r["pid"] for r in ds.index_lookup_circle("locIdx", Circle(Point(cx, cy), rad)))
        want = sorted(r["pid"] for r in rows if "loc" in r
                      and (r["loc"].x - cx) ** 2 + (r["loc"].y - cy) ** 2 <= rad * rad)
        assert got == want
    # each key lives only in its hash partition
    seen = set()
    for p in range(ds.partition_count):
        for r in ds.scan_partition(p):
            k = extract_primary_key(r, ["pid"])
            assert partition_of(k, ds.partition_count) == p and k not in seen
            seen.add(k)


boxes = st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 10), st.floats(0, 10))


@given(st.lists(boxes, max_size=80), st.lists(boxes, max_size=40), boxes, st.booleans())
@settings(max_examples=60, deadline=None)
def test_rtree_matches_linear_scan(loaded, inserted, query, delete_some):
    tree = RTree.bulk_load([((x, y, x + w, y + h), i) for i, (x, y, w, h) in enumerate(loaded)])
    items = {i: (x, y, x + w, y + h) for i, (x, y, w, h) in enumerate(loaded)}
    for j, (x, y, w, h) in enumerate(inserted, len(loaded)):
        tree.insert((x, y, x + w, y + h), j)
        items[j] = (x, y, x + w, y + h)
    if delete_some:
        for k in list(items)[::3]:
            tree.delete(items.pop(k), k)
    tree.check()
    qx, qy, qw, qh = query
    q = (qx, qy, qx + qw, qy + qh)
    want = sorted(k for k, b in items.items()
                  if b[0] <= q[2] and q[0] <= b[2] and b[1] <= q[3] and q[1] <= b[3])
    assert sorted(tree.search(q)) == want
    assert len(tree) == len(items)
