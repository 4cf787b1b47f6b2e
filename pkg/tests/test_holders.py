import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.errors import DuplicateHolderId, HolderClosed, UnknownHolderId, WrongMode
from idea.holders import HolderManager, HolderMode, PartitionHolder, PartitionHolderId
from idea.runtime import Frame, eof_frame


def frame(n, start=0):
    return Frame([b"r%d" % i for i in range(start, start + n)])


def holder(mode=HolderMode.PASSIVE, capacity=32, name="feed:intake"):
    return PartitionHolder(PartitionHolderId(name, 0), mode, capacity)


def test_registry():
    m = HolderManager()
    h = holder()
    m.register(h)
    assert m.lookup(h.id) is h
    with pytest.raises(DuplicateHolderId):
        m.register(holder())
    with pytest.raises(UnknownHolderId):
        m.lookup(PartitionHolderId("other", 0))


def test_offer_and_close():
    h = holder()
    h.offer_frame(frame(3))
    assert h.queued_frames() == 1
    h.close()
    with pytest.raises(HolderClosed):
        h.offer_frame(frame(1))


def test_batch_stops_at_queued_frames():
    h = holder()
    for i in range(3):
        h.offer_frame(frame(128, i * 128))
    b = h.poll_batch(420)
    assert len(b) == 384 and not b.end_of_feed


def test_batch_is_exactly_batch_size():
    h = holder()
    for i in range(5):
        h.offer_frame(frame(128, i * 128))
    b = h.poll_batch(420)
    assert len(b) == 420
    assert b.records[-1] == b"r419"
    assert h.poll_batch(420).records[0] == b"r420"


def test_eof_ends_short_batch():
    h = holder()
    h.offer_frame(frame(10))
    h.offer_frame(eof_frame())
    b = h.poll_batch(420, linger=1.0)
    assert len(b) == 10 and b.end_of_feed
    assert h.poll_batch(420).end_of_feed


def test_active_push_in_order_then_eof():
    h = holder(HolderMode.ACTIVE)
    for i in range(5):
        h.push_downstream(frame(1, i))
    h.push_downstream(eof_frame())
    got = [h.next_frame() for _ in range(6)]
    assert [f.records for f in got[:5]] == [[b"r%d" % i] for i in range(5)]
    assert got[5].is_eof


def test_wrong_modes():
    with pytest.raises(WrongMode):
        holder().push_downstream(frame(1))
    with pytest.raises(WrongMode):
        holder(HolderMode.ACTIVE).poll_batch(1)


def test_producer_blocks_at_capacity():
    h = holder(capacity=4)
    done = []

    def produce():
        for i in range(5):
            h.offer_frame(frame(1, i))
            done.append(i)

    t = threading.Thread(target=produce, daemon=True)
    t.start()
    time.sleep(0.2)
    assert done == [0, 1, 2, 3] and h.queued_frames() == 4
    assert h.poll_batch(1).records == [b"r0"]
    t.join(2)
    assert done == [0, 1, 2, 3, 4] and h.queued_frames() == 4


@given(st.lists(st.integers(1, 50), max_size=20), st.integers(1, 200), st.integers(1, 8))
@settings(max_examples=60, deadline=None)
def test_fifo_without_loss(sizes, batch, capacity):
    h = holder(capacity=capacity)
    sent = []
    n = 0
    for s in sizes:
        sent += [b"r%d" % i for i in range(n, n + s)]
        n += s

    def produce():
        k = 0
        for s in sizes:
            h.offer_frame(frame(s, k))
            k += s
        h.offer_frame(eof_frame())

    t = threading.Thread(target=produce, daemon=True)
    t.start()
    got = []
    while True:
        b = h.poll_batch(batch, linger=0.01)
        assert len(b) <= batch
        got += b.records
        if b.end_of_feed:
            break
    t.join(2)
    assert got == sent
    assert h.offered_records == h.taken_records == len(sent)
