import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.database import Database
from idea.datamodel import Circle, Point, Rectangle
from idea.enrichment import (
    JoinStats,
    Statefulness,
    evaluate_batch,
    evaluate_per_record,
    evaluate_record,
    hash_join,
    nested_loop_join,
    open_stream_evaluator,
)
from idea.enrichment.builtins import levenshtein, spatial_intersect
from idea.errors import StatefulStreamRejected, StreamBuildOverflow

SCRIPTS = Path(__file__).parent / "scripts"

WORDS_DDL = """
CREATE TYPE SensitiveWordType AS OPEN { wid: string, country: string, word: string };
CREATE DATASET SensitiveWords(SensitiveWordType) PRIMARY KEY wid;
"""


def _script(name):
    return next(SCRIPTS.glob(f"*{name}.sqlpp")).read_text()


def safety_db(**kw):
    db = Database(1, **kw)
    db.execute(_script("tweets_dataset"))
    db.execute(WORDS_DDL)
    db.execute(_script("sensitive_word_check"))
    db.execute(_script("us_safety_check"))
    return db


def dp_distance(a, b):
    """Full-matrix Wagner-Fischer, kept separate from the two-row version."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


# -- joins ------------------------------------------------------------------------------------

# spilled rows come back as data-model values, so rows are lists, not tuples
rows = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 1000)).map(list), max_size=80)


def _pairs(out):
    return sorted((tuple(p), tuple(b)) for p, b in out)


@given(rows, rows, st.sampled_from([None, 64, 200, 1000]))
@settings(max_examples=80, deadline=None)
def test_hash_join_matches_nested_loop(build, probe, budget):
    key = lambda r: r[0]
    want = _pairs(nested_loop_join(build, probe, key, key))
    got = _pairs(hash_join(build, probe, key, key, budget=budget, row_size=16))
    assert got == want


@given(rows, rows)
@settings(max_examples=40, deadline=None)
def test_residual_applies_after_key_match(build, probe):
    key = lambda r: r[0]
    res = lambda p, b: (p[1] + b[1]) % 3 == 0
    want = _pairs(nested_loop_join(build, probe, key, key, res))
    assert _pairs(hash_join(build, probe, key, key, budget=100, residual=res,
                            row_size=16)) == want


def test_spilling_does_not_change_result(tmp_path):
    rnd = random.Random(5)
    build = [{"k": rnd.randrange(300), "v": i} for i in range(3000)]
    probe = [{"k": rnd.randrange(400), "p": i} for i in range(5000)]
    key = lambda r: r["k"]
    base = hash_join(build, probe, key, key, budget=None)
    stats = JoinStats()
    spilled = hash_join(build, probe, key, key, budget=3000 * 40 // 10, spill_dir=str(tmp_path),
                        row_size=40, stats=stats)
    norm = lambda out: sorted((p["p"], b["v"]) for p, b in out)
    assert norm(spilled) == norm(base)
    assert stats.partitions >= 2
    assert list(tmp_path.iterdir()) == []


def test_null_and_missing_keys_never_join():
    build = [{"k": None}, {}, {"k": 1}]
    probe = [{"k": None}, {}, {"k": 1}]
    key = lambda r: r.get("k")
    assert len(hash_join(build, probe, key, key)) == 1


def test_bad_budget():
    with pytest.raises(ValueError):
        hash_join([], [], len, len, budget=0)


# -- builtins ---------------------------------------------------------------------------------

def test_edit_distance_example():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3


@given(st.text("abc", max_size=8), st.text("abc", max_size=8), st.text("abc", max_size=8))
@settings(max_examples=200)
def test_edit_distance_is_a_metric(a, b, c):
    d = levenshtein(a, b)
    assert d == dp_distance(a, b)
    assert d == levenshtein(b, a)
    assert (d == 0) == (a == b)
    assert levenshtein(a, c) <= d + levenshtein(b, c)


def test_spatial_intersect():
    c = Circle(Point(0, 0), 1)
    assert spatial_intersect(Point(0.5, 0.5), c)
    assert not spatial_intersect(Point(1, 1), c)
    r = Rectangle(Point(0, 0), Point(2, 2))
    assert spatial_intersect(Point(2, 2), r)
    assert spatial_intersect(Circle(Point(3, 1), 1.0), r)
    assert not spatial_intersect(Circle(Point(3.5, 1), 1.0), r)


def test_aggregate_and_topk_queries():
    db = Database(1)
    assert db.query("SELECT VALUE sum(x) FROM [10, 20, 30] x") == [60]
    assert db.query("SELECT VALUE x FROM [5, 1, 4, 2] x ORDER BY x DESC LIMIT 2") == [5, 4]


# -- functions --------------------------------------------------------------------------------

def test_classification():
    db = safety_db()
    assert db.functions.classify("USTweetSafetyCheck") is Statefulness.STATELESS
    assert db.functions.classify("tweetSafetyCheck") is Statefulness.STATEFUL


def test_safety_flags():
    db = safety_db()
    db.execute('UPSERT INTO SensitiveWords ({"wid":"1","country":"US","word":"bomb"});')
    fn = db.functions.get("tweetSafetyCheck")
    out = evaluate_batch(fn, [{"id": 1, "text": "a bomb", "country": "US"},
                              {"id": 2, "text": "a bomb", "country": "FR"},
                              {"id": 3, "text": "calm", "country": "US"}], db.context)
    assert [r["safety_check_flag"] for r in out] == ["Red", "Green", "Green"]
    assert out[0]["text"] == "a bomb" and out[0]["id"] == 1


def test_empty_reference_gives_green():
    db = safety_db()
    fn = db.functions.get("tweetSafetyCheck")
    tweets = [{"id": i, "text": "bomb", "country": "US"} for i in range(20)]
    assert {r["safety_check_flag"] for r in evaluate_per_record(fn, tweets, db.context)} == \
        {"Green"}


def test_upsert_between_records_is_visible():
    db = safety_db()
    fn = db.functions.get("tweetSafetyCheck")
    t = {"id": 1, "text": "the bomb", "country": "US"}
    assert evaluate_record(fn, t, db.context)["safety_check_flag"] == "Green"
    db.execute('UPSERT INTO SensitiveWords ({"wid":"1","country":"US","word":"bomb"});')
    assert evaluate_record(fn, t, db.context)["safety_check_flag"] == "Red"


def test_stream_model_rules():
    db = safety_db()
    with pytest.raises(StatefulStreamRejected):
        open_stream_evaluator(db.functions.get("tweetSafetyCheck"), db.context)
    ev = open_stream_evaluator(db.functions.get("USTweetSafetyCheck"), db.context)
    out = ev.apply([{"id": 1, "text": "bomb", "country": "US"}])
    assert out[0]["safety_check_flag"] == "Red"


def test_stream_build_overflow():
    db = safety_db(join_budget=40_000)
    db.context.allow_stale_stream = True
    ds = db.storage.dataset("SensitiveWords")
    ds.bulk_load([{"wid": f"w{i:05d}", "country": "US", "word": "x" * 40} for i in range(3000)])
    with pytest.raises(StreamBuildOverflow):
        open_stream_evaluator(db.functions.get("tweetSafetyCheck"), db.context)


def test_failed_record_is_reported_not_raised():
    db = safety_db()
    fn = db.functions.get("USTweetSafetyCheck")
    out = evaluate_batch(fn, [{"id": 1, "text": "ok", "country": "US"},
                              {"id": 2, "text": 5, "country": "US"}], db.context)
    assert len(out) == 1 and [f.record_index for f in out.failures] == [1]
