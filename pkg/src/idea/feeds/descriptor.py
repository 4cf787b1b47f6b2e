"""Feed descriptors, evaluation models and the feed lifecycle state machine."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..errors import IllegalFeedState, InvalidSpec

DEFAULT_BATCH_SIZE = 420


class FeedModel(enum.Enum):
    PER_RECORD = "record"
    PER_BATCH = "batch"
    STREAM = "stream"

    @classmethod
    def parse(cls, text):
        t = str(text).lower().replace("_", "-")
        aliases = {"record": cls.PER_RECORD, "per-record": cls.PER_RECORD, "1": cls.PER_RECORD,
                   "batch": cls.PER_BATCH, "per-batch": cls.PER_BATCH, "2": cls.PER_BATCH,
                   "stream": cls.STREAM, "3": cls.STREAM}
        try:
            return aliases[t]
        except KeyError:
            raise InvalidSpec("feed model", f"unknown model {text!r}") from None


class FeedState(enum.Enum):
    CREATED = "Created"
    CONNECTED = "Connected"
    RUNNING = "Running"
    STOPPING = "Stopping"
    STOPPED = "Stopped"


_TRANSITIONS = {
    FeedState.CREATED: {FeedState.CONNECTED},
    FeedState.CONNECTED: {FeedState.RUNNING},
    FeedState.RUNNING: {FeedState.STOPPING},
    FeedState.STOPPING: {FeedState.STOPPED},
    FeedState.STOPPED: {FeedState.CONNECTED, FeedState.RUNNING},
}


class FeedStateMachine:
    def __init__(self, name):
        self.name = name
        self.state = FeedState.CREATED

    def require(self, *states):
        if self.state not in states:
            want = " or ".join(s.value for s in states)
            raise IllegalFeedState(f"feed {self.name} is {self.state.value}; needs {want}")

    def move(self, new):
        if new not in _TRANSITIONS[self.state]:
            raise IllegalFeedState(
                f"feed {self.name}: cannot go from {self.state.value} to {new.value}")
        self.state = new


@dataclass(frozen=True)
class SocketSource:
    host: str
    port: int


@dataclass(frozen=True)
class FileSource:
    path: str
    rate: float = None  # records per second; None replays as fast as possible


@dataclass(frozen=True)
class LinesSource:
    """In-process source over a sequence of newline-free byte strings."""

    lines: tuple = field(repr=False, default=())
    rate: float = None


@dataclass
class FeedDescriptor:
    name: str
    type_name: str
    adapter: object
    format: str = "JSON"
    target_dataset: str = None
    function: str = None
    batch_size: int = DEFAULT_BATCH_SIZE
    model: FeedModel = FeedModel.PER_BATCH
    intake_nodes: tuple = (0,)
    write_mode: str = "insert"  # insert skips duplicate keys; upsert replaces

    def __post_init__(self):
        if self.write_mode not in ("insert", "upsert"):
            raise InvalidSpec("feed write mode", f"expected insert or upsert, got {self.write_mode!r}")
        if self.batch_size < 1:
            raise InvalidSpec("feed batch size", f"batch size must be >= 1, got {self.batch_size}")
        if str(self.format).upper() != "JSON":
            raise InvalidSpec("feed format", f"unsupported format {self.format!r}")
        self.intake_nodes = tuple(self.intake_nodes)
        if not self.intake_nodes:
            raise InvalidSpec("feed intake", "a feed needs at least one intake node")


def _parse_sockets(text):
    host, sep, port = str(text).rpartition(":")
    if not sep or not host:
        raise InvalidSpec("feed sockets", f"expected host:port, got {text!r}")
    try:
        return SocketSource(host, int(port))
    except ValueError:
        raise InvalidSpec("feed sockets", f"bad port in {text!r}") from None


def descriptor_from_options(name, options, nodes=1):
    """Build a descriptor from CREATE FEED ... WITH {...} options."""
    opts = dict(options)
    if "type-name" not in opts:
        raise InvalidSpec("feed options", "missing \"type-name\"")
    adapter_name = str(opts.get("adapter-name", "socket_adapter")).lower()
    if adapter_name in ("socket_adapter", "socket"):
        if "sockets" not in opts:
            raise InvalidSpec("feed options", "socket_adapter needs \"sockets\"")
        adapter = _parse_sockets(opts["sockets"])
    elif adapter_name in ("file_replay", "localfs", "file"):
        path = opts.get("path")
        if path is None:
            raise InvalidSpec("feed options", f"{adapter_name} needs \"path\"")
        rate = opts.get("rate")
        adapter = FileSource(str(path), float(rate) if rate is not None else None)
    else:
        raise InvalidSpec("feed options", f"unknown adapter {adapter_name!r}")
    intake = opts.get("intake-nodes")
    if intake is None:
        intake_nodes = (0,)
    elif str(intake).lower() == "all":
        intake_nodes = tuple(range(nodes))
    else:
        try:
            intake_nodes = tuple(int(x) for x in str(intake).split(","))
        except ValueError:
            raise InvalidSpec("feed options", f"bad intake-nodes {intake!r}") from None
    for n in intake_nodes:
        if not 0 <= n < nodes:
            raise InvalidSpec("feed options", f"intake node {n} is not in the cluster")
    try:
        batch = int(opts.get("batch-size", DEFAULT_BATCH_SIZE))
    except (TypeError, ValueError):
        raise InvalidSpec("feed options", "batch-size must be an integer") from None
    return FeedDescriptor(
        name=name,
        type_name=str(opts["type-name"]),
        adapter=adapter,
        format=str(opts.get("format", "JSON")),
        batch_size=batch,
        model=FeedModel.parse(opts.get("model", "batch")),
        intake_nodes=intake_nodes,
        write_mode=str(opts.get("write-mode", "insert")).lower(),
    )
