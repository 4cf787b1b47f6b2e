"""Frames: the unit of transfer between operator partitions."""

from dataclasses import dataclass, field

FRAME_RECORDS = 128
FRAME_BYTES = 64 * 1024


@dataclass(slots=True)
class Frame:
    records: list = field(default_factory=list)
    source_partition: int = 0
    sequence: int = 0
    is_eof: bool = False
    # optional per-record key bytes computed by a hash partitioner
    keys: list = None

    def __len__(self):
        return len(self.records)


def eof_frame(source_partition=0, sequence=0):
    return Frame([], source_partition, sequence, True)


class FrameAppender:
    """Packs serialized records into frames and hands full frames to ``emit``.

    A frame is cut at ``capacity`` records or ``max_bytes`` of payload,
    whichever comes first.
    """

    __slots__ = ("emit", "partition", "capacity", "max_bytes", "_records", "_keys",
                 "_bytes", "_seq")

    def __init__(self, emit, partition=0, capacity=FRAME_RECORDS, max_bytes=FRAME_BYTES,
                 sequence=None):
        self.emit = emit
        self.partition = partition
        self.capacity = capacity
        self.max_bytes = max_bytes
        self._records = []
        self._keys = None
        self._bytes = 0
        # sequence counters may be shared between appenders of one producer
        self._seq = sequence if sequence is not None else [0]

    def append(self, record, key=None):
        if key is not None:
            if self._keys is None:
                self._keys = [None] * len(self._records)
            self._keys.append(key)
        elif self._keys is not None:
            self._keys.append(None)
        self._records.append(record)
        self._bytes += len(record)
        if len(self._records) >= self.capacity or self._bytes >= self.max_bytes:
            self.flush()

    def flush(self):
        if not self._records:
            return
        f = Frame(self._records, self.partition, self._next_seq(), False, self._keys)
        self._records, self._keys, self._bytes = [], None, 0
        self.emit(f)

    def _next_seq(self):
        s = self._seq[0]
        self._seq[0] = s + 1
        return s

    def pending(self):
        return len(self._records)


def frames_from_records(records, partition=0, capacity=FRAME_RECORDS, max_bytes=FRAME_BYTES):
    out = []
    app = FrameAppender(out.append, partition, capacity, max_bytes)
    for r in records:
        app.append(r)
    app.flush()
    return out
