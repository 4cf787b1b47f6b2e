import socket
import time
from pathlib import Path

import pytest

from idea.bench.generators import generate_tweets, tweet_lines
from idea.database import Database
from idea.errors import BindError, IllegalFeedState, InvalidSpec, UnknownFunction
from idea.feeds import (
    FeedDescriptor,
    FeedModel,
    FeedState,
    FileSource,
    LinesReplay,
    LinesSource,
    SocketSource,
    descriptor_from_options,
)

SCRIPTS = Path(__file__).parent / "scripts"


def _script(name):
    return next(SCRIPTS.glob(f"*{name}.sqlpp")).read_text()


def tweets_db(nodes=1):
    db = Database(nodes)
    db.execute(_script("tweets_dataset"))
    db.execute(_script("us_safety_check"))
    return db


def lines_feed(db, lines, name="F", **kw):
    db.create_feed(FeedDescriptor(name, "TweetType", LinesSource(tuple(lines)), **kw))


def run_to_end(db, name="F", **kw):
    rt = db.start_feed(name, **kw)
    assert rt.wait(120)
    return db.stop_feed(name)


def test_state_machine():
    db = tweets_db()
    lines_feed(db, [b'{"id":1,"text":"x"}'])
    assert db.feed_state("F") is FeedState.CREATED
    with pytest.raises(IllegalFeedState):
        db.start_feed("F")
    with pytest.raises(UnknownFunction):
        db.connect_feed("F", "Tweets", "noSuchFunction")
    db.connect_feed("F", "Tweets")
    rt = db.start_feed("F")
    assert db.feed_state("F") is FeedState.RUNNING
    with pytest.raises(IllegalFeedState):
        db.start_feed("F")
    with pytest.raises(IllegalFeedState):
        db.connect_feed("F", "Tweets")
    rt.wait(30)
    db.stop_feed("F")
    assert db.feed_state("F") is FeedState.STOPPED
    with pytest.raises(IllegalFeedState):
        db.stop_feed("F")
    # a stopped feed can run again
    db.start_feed("F").wait(30)
    db.stop_feed("F")
    db.close()


def test_passthrough_stores_everything():
    db = tweets_db(2)
    tw = list(generate_tweets(1000, seed=1))
    lines_feed(db, tweet_lines(tw))
    db.connect_feed("F", "Tweets")
    m = run_to_end(db)
    assert m.ingested == m.stored == 1000 and m.skipped == 0
    assert sorted(r["id"] for r in db.storage.dataset("Tweets").scan()) == \
        sorted(t["id"] for t in tw)


def test_malformed_line_is_skipped():
    db = tweets_db()
    lines = [b'{"id":%d,"text":"t"}' % i for i in range(99)]
    lines.insert(40, b'{"id": 500, "text": ')
    lines_feed(db, lines)
    db.connect_feed("F", "Tweets")
    m = run_to_end(db)
    assert (m.stored, m.skipped) == (99, 1)


def test_function_applied_under_each_model():
    for model in FeedModel:
        db = tweets_db(2)
        lines_feed(db, [b'{"id":1,"text":"a bomb","country":"US"}',
                        b'{"id":2,"text":"calm","country":"US"}'], model=model)
        db.execute("CREATE TYPE EnrichedType AS OPEN { id: int64 };"
                   "CREATE DATASET EnrichedTweets(EnrichedType) PRIMARY KEY id;")
        db.connect_feed("F", "EnrichedTweets", "USTweetSafetyCheck")
        run_to_end(db)
        flags = {r["id"]: r["safety_check_flag"]
                 for r in db.storage.dataset("EnrichedTweets").scan()}
        assert flags == {1: "Red", 2: "Green"}, model


def test_socket_feed_end_to_end():
    db = tweets_db()
    db.create_feed(FeedDescriptor("S", "TweetType", SocketSource("127.0.0.1", 0)))
    db.connect_feed("S", "Tweets")
    rt = db.start_feed("S")
    host, port = rt.addresses[0]
    with socket.create_connection((host, port)) as c:
        for i in range(50):
            c.sendall(b'{"id":%d,"text":"hello"}\n' % i)
    deadline = time.time() + 20
    while db.storage.dataset("Tweets").count() < 50 and time.time() < deadline:
        time.sleep(0.05)
    m = db.stop_feed("S", timeout=30)
    assert m.stored == 50


def test_socket_port_in_use():
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    try:
        db = tweets_db()
        db.create_feed(FeedDescriptor("S", "TweetType",
                                      SocketSource("127.0.0.1", blocker.getsockname()[1])))
        db.connect_feed("S", "Tweets")
        with pytest.raises(BindError):
            db.start_feed("S")
    finally:
        blocker.close()


def test_two_feeds_at_once():
    db = tweets_db(2)
    lines_feed(db, [b'{"id":%d,"text":"a"}' % i for i in range(300)], "A")
    lines_feed(db, [b'{"id":%d,"text":"b"}' % i for i in range(300, 700)], "B")
    db.connect_feed("A", "Tweets")
    db.connect_feed("B", "Tweets")
    ra, rb = db.start_feed("A"), db.start_feed("B")
    assert ra.wait(60) and rb.wait(60)
    assert db.stop_feed("A").stored == 300
    assert db.stop_feed("B").stored == 400
    assert db.storage.dataset("Tweets").count() == 700


def test_replay_rate():
    src = LinesReplay([b"x"] * 10_000, rate=2000)
    t0 = time.perf_counter()
    got = sum(1 for _ in src.lines())
    took = time.perf_counter() - t0
    assert got == 10_000
    assert 2000 * 0.9 <= got / took <= 2000 * 1.1


def test_descriptor_from_options():
    d = descriptor_from_options("TweetFeed", {"type-name": "TweetType", "adapter-name":
                                              "socket_adapter", "format": "JSON",
                                              "sockets": "127.0.0.1:10001",
                                              "address-type": "IP"})
    assert d.adapter == SocketSource("127.0.0.1", 10001)
    assert d.model is FeedModel.PER_BATCH and d.batch_size == 420
    d = descriptor_from_options("R", {"type-name": "T", "adapter-name": "file_replay",
                                      "path": "/tmp/x", "rate": "100", "model": "stream",
                                      "intake-nodes": "all", "batch-size": 64}, nodes=3)
    assert d.adapter == FileSource("/tmp/x", 100.0)
    assert d.intake_nodes == (0, 1, 2) and d.model is FeedModel.STREAM and d.batch_size == 64
    for bad in ({}, {"type-name": "T", "sockets": "nope"},
                {"type-name": "T", "sockets": "h:1", "format": "CSV"},
                {"type-name": "T", "sockets": "h:1", "intake-nodes": "5"},
                {"type-name": "T", "adapter-name": "kafka"}):
        with pytest.raises(InvalidSpec):
            descriptor_from_options("X", bad)


def test_script_runs_socket_feed():
    db = Database(1)
    db.execute(_script("tweets_dataset"))
    db.execute(_script("socket_feed").replace("10001", "0"))
    assert db.feed_state("TweetFeed") is FeedState.RUNNING
    db.stop_feed("TweetFeed", timeout=30)
    assert db.feed_state("TweetFeed") is FeedState.STOPPED
