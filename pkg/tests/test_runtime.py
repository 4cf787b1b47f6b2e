import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.errors import InvalidSpec
from idea.hashing import partition_of, stable_hash
from idea.runtime import (
    Cluster,
    ConnectorDescriptor,
    ConnectorKind,
    JobSpec,
    OperatorDescriptor,
    OperatorRuntime,
    broadcast,
    build_job,
    compile_spec,
    hash_partition,
    one_to_one,
    round_robin,
    route,
    spread,
)


class Source(OperatorRuntime):
    """Emits ``count`` records per partition, keyed by value."""

    count = 0

    def run(self):
        for i in range(self.count):
            v = b"%d:%d" % (self.ctx.partition, i)
            self.ctx.writer.append(v, v)


class Sink(OperatorRuntime):
    seen = None
    lock = threading.Lock()

    def next_frame(self, frame):
        with self.lock:
            self.seen.setdefault(self.ctx.partition, []).extend(frame.records)


class Failing(OperatorRuntime):
    def next_frame(self, frame):
        raise ValueError("boom")


def _source(n, count, nodes):
    cls = type("S", (Source,), {"count": count})
    return OperatorDescriptor("src", "source", n, spread(n, nodes), cls, source=True)


def _sink(n, nodes, seen, op_id="sink", cls=Sink):
    sink_cls = type("K", (cls,), {"seen": seen})
    return OperatorDescriptor(op_id, "sink", n, spread(n, nodes), sink_cls)


def _run(spec, nodes):
    return build_job(spec, Cluster(nodes)).start().wait(30)


def test_instances_per_partition():
    seen = {}
    spec = JobSpec([_source(3, 5, range(3)), _sink(3, range(3), seen)],
                   [one_to_one("src", "sink")])
    r = _run(spec, 3).check()
    assert sorted(seen) == [0, 1, 2]
    assert r.records_in["sink"] == 15


def test_cycle_rejected():
    a = OperatorDescriptor("a", "x", 1, (0,), OperatorRuntime)
    b = OperatorDescriptor("b", "x", 1, (0,), OperatorRuntime)
    with pytest.raises(InvalidSpec, match="cycle"):
        compile_spec(JobSpec([a, b], [one_to_one("a", "b"), one_to_one("b", "a")]))


def test_one_to_one_arity_mismatch():
    seen = {}
    spec = JobSpec([_source(3, 1, range(3)), _sink(2, range(3), seen)],
                   [one_to_one("src", "sink")])
    with pytest.raises(InvalidSpec):
        compile_spec(spec)


def test_hash_connector_needs_keys():
    spec = JobSpec([_source(1, 1, [0]), _sink(1, [0], {})],
                   [ConnectorDescriptor(ConnectorKind.HASH_PARTITION, "src", "sink", ())])
    with pytest.raises(InvalidSpec):
        compile_spec(spec)


def test_empty_source_completes():
    seen = {}
    r = _run(JobSpec([_source(2, 0, [0, 1]), _sink(2, [0, 1], seen)],
                     [round_robin("src", "sink")]), 2).check()
    assert r.records_in["sink"] == 0 and seen == {}


def test_operator_failure_names_operator():
    spec = JobSpec([_source(1, 10, [0]), _sink(1, [0], {}, "udf", Failing)],
                   [round_robin("src", "udf")])
    r = _run(spec, 1)
    assert not r.ok
    assert "udf" in str(r.failure)


def test_round_robin_route():
    c = round_robin("a", "b")
    assert [route(c, frame_index=i, partitions=3)[0] for i in range(5)] == [0, 1, 2, 0, 1]


def test_broadcast_copies():
    seen = {}
    r = _run(JobSpec([_source(1, 10, [0]), _sink(4, range(4), seen)],
                     [broadcast("src", "sink")]), 4).check()
    assert r.records_in["sink"] == 40
    assert all(len(v) == 10 for v in seen.values())


def test_stable_hash_is_fixed():
    # blake2b-64 of the empty key, little-endian; frozen so partitions never move
    assert stable_hash(b"") == int.from_bytes(
        bytes.fromhex("e4a6a0577479b2b4"), "little")


@given(st.binary(max_size=16), st.integers(1, 64))
def test_hash_partition_is_pure(key, parts):
    p = partition_of(key, parts)
    assert 0 <= p < parts and p == partition_of(key, parts)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 300),
       st.sampled_from(["one", "rr", "hash"]))
@settings(max_examples=30, deadline=None)
def test_record_conservation(src_parts, dst_parts, count, kind):
    if kind == "one":
        dst_parts = src_parts
    seen = {}
    conn = {"one": one_to_one, "rr": round_robin,
            "hash": lambda a, b: hash_partition(a, b, ("k",))}[kind]("src", "sink")
    nodes = range(max(src_parts, dst_parts))
    r = _run(JobSpec([_source(src_parts, count, nodes), _sink(dst_parts, nodes, seen)], [conn]),
             len(nodes)).check()
    got = sorted(x for v in seen.values() for x in v)
    want = sorted(b"%d:%d" % (p, i) for p in range(src_parts) for i in range(count))
    assert got == want
    assert r.records_in["sink"] == r.records_out["src"] == len(want)
    if kind == "hash":
        for p, recs in seen.items():
            assert all(partition_of(x, dst_parts) == p for x in recs)


@given(st.integers(1, 5), st.integers(1, 6))
def test_round_robin_balance(parts, k):
    c = round_robin("a", "b")
    counts = [0] * parts
    for i in range(k * parts):
        counts[route(c, frame_index=i, partitions=parts)[0]] += 1
    assert counts == [k] * parts
