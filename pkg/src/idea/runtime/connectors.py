"""Connector routing between producer and consumer partitions."""

from ..datamodel import deserialize_record, extract_primary_key
from ..hashing import partition_of
from .frames import Frame, FrameAppender
from .job import ConnectorKind


def route(connector, frame_index=None, key=None, partitions=1, source_partition=0):
    """Target partitions for a frame (RoundRobin/Broadcast/OneToOne) or a key (Hash)."""
    kind = connector.kind
    if kind is ConnectorKind.ONE_TO_ONE:
        return [source_partition]
    if kind is ConnectorKind.ROUND_ROBIN:
        return [frame_index % partitions]
    if kind is ConnectorKind.BROADCAST:
        return list(range(partitions))
    return [partition_of(key, partitions)]


class Output:
    """Producer-side end of one connector for one producer partition."""

    def __init__(self, connector, producer_partition, inboxes, counter):
        self.connector = connector
        self.partition = producer_partition
        self.inboxes = inboxes  # consumer partition -> inbox
        self.counter = counter
        self.seq = [0]

    def send(self, target, frame):
        self.inboxes[target].put(frame)

    def append(self, record, key=None):
        raise NotImplementedError

    def push_frame(self, frame):
        raise NotImplementedError

    def flush(self):
        raise NotImplementedError

    def eof_targets(self):
        if self.connector.kind is ConnectorKind.ONE_TO_ONE:
            return [self.partition]
        return list(self.inboxes)


class OneToOneOutput(Output):
    def __init__(self, *a):
        super().__init__(*a)
        self.app = FrameAppender(self._emit, self.partition, sequence=self.seq)

    def _emit(self, frame):
        self.send(self.partition, frame)

    def append(self, record, key=None):
        self.app.append(record, key)

    def push_frame(self, frame):
        self.app.flush()
        self.send(self.partition, Frame(frame.records, self.partition, self.app._next_seq(),
                                        False, frame.keys))

    def flush(self):
        self.app.flush()


class RoundRobinOutput(Output):
    def __init__(self, *a):
        super().__init__(*a)
        self.n = len(self.inboxes)
        self.frame_index = 0
        self.app = FrameAppender(self._emit, self.partition, sequence=self.seq)

    def _emit(self, frame):
        target = self.frame_index % self.n
        self.frame_index += 1
        self.send(target, frame)

    def append(self, record, key=None):
        self.app.append(record, key)

    def push_frame(self, frame):
        self.app.flush()
        self._emit(Frame(frame.records, self.partition, self.app._next_seq(), False, frame.keys))

    def flush(self):
        self.app.flush()


class BroadcastOutput(Output):
    def __init__(self, *a):
        super().__init__(*a)
        self.app = FrameAppender(self._emit, self.partition, sequence=self.seq)

    def _emit(self, frame):
        for t in self.inboxes:
            self.send(t, frame)

    def append(self, record, key=None):
        self.app.append(record, key)

    def push_frame(self, frame):
        self.app.flush()
        self._emit(Frame(frame.records, self.partition, self.app._next_seq(), False, frame.keys))

    def flush(self):
        self.app.flush()


class HashOutput(Output):
    def __init__(self, *a):
        super().__init__(*a)
        self.n = len(self.inboxes)
        self.fields = self.connector.key_fields
        self.apps = [FrameAppender(self._emitter(t), self.partition, sequence=self.seq)
                     for t in range(self.n)]

    def _emitter(self, target):
        return lambda frame: self.send(target, frame)

    def append(self, record, key=None):
        if key is None:
            key = extract_primary_key(deserialize_record(record), self.fields)
        self.apps[partition_of(key, self.n)].append(record, key)

    def push_frame(self, frame):
        keys = frame.keys
        for i, rec in enumerate(frame.records):
            self.append(rec, keys[i] if keys is not None else None)

    def flush(self):
        for a in self.apps:
            a.flush()


OUTPUT_CLASSES = {
    ConnectorKind.ONE_TO_ONE: OneToOneOutput,
    ConnectorKind.ROUND_ROBIN: RoundRobinOutput,
    ConnectorKind.BROADCAST: BroadcastOutput,
    ConnectorKind.HASH_PARTITION: HashOutput,
}
