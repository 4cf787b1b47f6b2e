"""Partition holders: bounded frame queues used to hand data between jobs.

A passive holder is pulled from (``poll_batch``); an active holder pushes
its frames into the job that hosts it (``next_frame`` drained by that job's
source operator). Producers block when the queue is full; nothing is dropped.
"""

from __future__ import annotations

import enum
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import (
    DuplicateHolderId,
    HolderClosed,
    JobAborted,
    UnknownHolderId,
    WrongMode,
)
from .runtime.frames import Frame

DEFAULT_CAPACITY = 32

# wake-up interval for cancellable waits
_TICK = 0.05


class HolderMode(enum.Enum):
    PASSIVE = "passive"
    ACTIVE = "active"


class HolderState(enum.Enum):
    OPEN = "open"
    DRAINING = "draining"
    CLOSED = "closed"


@dataclass(frozen=True)
class PartitionHolderId:
    entity: str
    partition: int

    def __str__(self):
        return f"{self.entity}#{self.partition}"


@dataclass
class Batch:
    records: list = field(default_factory=list)
    end_of_feed: bool = False

    def __len__(self):
        return len(self.records)


class PartitionHolder:
    def __init__(self, holder_id, mode=HolderMode.PASSIVE, capacity=DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("holder capacity must be positive")
        self.id = holder_id
        self.mode = mode
        self.capacity = capacity
        self.state = HolderState.OPEN
        self._q = deque()
        self._cond = threading.Condition()
        self._poll_lock = threading.Lock()
        self._rest = None  # remainder of a partially consumed frame
        self._rest_pos = 0
        self.offered_records = 0
        self.offered_frames = 0
        self.taken_records = 0
        self.blocked_offers = 0

    # -- producer side ----------------------------------------------------------
    def offer_frame(self, frame, cancel=None):
        """Enqueue ``frame``, blocking while the queue is full.

        An EOF frame moves the holder to Draining; later offers fail.
        """
        with self._cond:
            if self.state is not HolderState.OPEN:
                raise HolderClosed(f"holder {self.id} is {self.state.value}")
            if len(self._q) >= self.capacity:
                self.blocked_offers += 1
                while len(self._q) >= self.capacity:
                    if cancel is not None and cancel.is_set():
                        raise JobAborted()
                    self._cond.wait(_TICK if cancel is not None else None)
                    if self.state is HolderState.CLOSED:
                        raise HolderClosed(f"holder {self.id} closed while waiting")
            self._q.append(frame)
            if frame.is_eof:
                self.state = HolderState.DRAINING
            else:
                self.offered_records += len(frame.records)
                self.offered_frames += 1
            self._cond.notify_all()

    def push_downstream(self, frame, cancel=None):
        """Active holders only: queue ``frame`` for the hosting job's downstream."""
        if self.mode is not HolderMode.ACTIVE:
            raise WrongMode(f"holder {self.id} is passive; push_downstream needs an active holder")
        self.offer_frame(frame, cancel)

    # -- consumer side ----------------------------------------------------------
    def queued_frames(self):
        with self._cond:
            return len(self._q)

    def queued_records(self):
        with self._cond:
            n = sum(len(f.records) for f in self._q)
            if self._rest is not None:
                n += len(self._rest) - self._rest_pos
            return n

    def _take(self, timeout, cancel):
        """Pop the next frame; None on timeout. Caller must not hold _cond."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._q:
                if cancel is not None and cancel.is_set():
                    raise JobAborted()
                if self.state is HolderState.CLOSED:
                    raise HolderClosed(f"holder {self.id} is closed")
                wait = _TICK if cancel is not None else None
                if deadline is not None:
                    left = deadline - time.monotonic()
                    if left <= 0:
                        return None
                    wait = left if wait is None else min(wait, left)
                self._cond.wait(wait)
            f = self._q.popleft()
            if f.is_eof:
                self.state = HolderState.CLOSED
            self._cond.notify_all()
            return f

    def next_frame(self, cancel=None, timeout=None):
        """Active holders: next frame in arrival order (EOF last)."""
        if self.mode is not HolderMode.ACTIVE:
            raise WrongMode(f"holder {self.id} is passive")
        f = self._take(timeout, cancel)
        if f is not None and not f.is_eof:
            with self._cond:
                self.taken_records += len(f.records)
        return f

    def poll_batch(self, batch_size, linger=None, cancel=None):
        """Passive holders: assemble up to ``batch_size`` records from queued frames.

        Blocks until at least one record or EOF is available. Without
        ``linger`` it then returns whatever was queued; with ``linger`` it
        keeps waiting for more frames until the batch is full or no frame
        arrives for ``linger`` seconds. An EOF ends the batch early with
        ``end_of_feed`` set.
        """
        if self.mode is not HolderMode.PASSIVE:
            raise WrongMode(f"holder {self.id} is active; poll_batch needs a passive holder")
        if batch_size < 1:
            raise ValueError("batch size must be positive")
        with self._poll_lock:
            if self.state is HolderState.CLOSED and self._rest is None and not self._q:
                return Batch([], True)
            out = []
            while len(out) < batch_size:
                if self._rest is not None:
                    need = batch_size - len(out)
                    rest, pos = self._rest, self._rest_pos
                    chunk = rest[pos:pos + need]
                    out.extend(chunk)
                    pos += len(chunk)
                    if pos >= len(rest):
                        self._rest, self._rest_pos = None, 0
                    else:
                        self._rest_pos = pos
                    continue
                if out:
                    if linger is None:
                        with self._cond:
                            if not self._q:
                                break
                        f = self._take(0, cancel)
                    else:
                        f = self._take(linger, cancel)
                    if f is None:
                        break
                else:
                    f = self._take(None, cancel)
                if f.is_eof:
                    self._account(len(out))
                    return Batch(out, True)
                self._rest, self._rest_pos = f.records, 0
            self._account(len(out))
            return Batch(out, False)

    def _account(self, n):
        with self._cond:
            self.taken_records += n

    def close(self):
        """Force the holder closed, waking blocked producers and consumers."""
        with self._cond:
            self.state = HolderState.CLOSED
            self._cond.notify_all()


class HolderManager:
    """Per-node registry of partition holders."""

    def __init__(self, node_id=0):
        self.node_id = node_id
        self._holders = {}
        self._lock = threading.Lock()

    def register(self, holder):
        with self._lock:
            if holder.id in self._holders:
                raise DuplicateHolderId(f"holder {holder.id} already registered on node {self.node_id}")
            self._holders[holder.id] = holder

    def lookup(self, holder_id):
        with self._lock:
            try:
                return self._holders[holder_id]
            except KeyError:
                raise UnknownHolderId(f"no holder {holder_id} on node {self.node_id}") from None

    def deregister(self, holder_id):
        with self._lock:
            if self._holders.pop(holder_id, None) is None:
                raise UnknownHolderId(f"no holder {holder_id} on node {self.node_id}")

    def ids(self):
        with self._lock:
            return list(self._holders)


# module-level conveniences mirroring the id-based operations
def offer_frame(manager, holder_id, frame, cancel=None):
    manager.lookup(holder_id).offer_frame(frame, cancel)


def poll_batch(manager, holder_id, batch_size, linger=None, cancel=None):
    return manager.lookup(holder_id).poll_batch(batch_size, linger, cancel)


def push_downstream(manager, holder_id, frame, cancel=None):
    manager.lookup(holder_id).push_downstream(frame, cancel)


__all__ = ["Batch", "Frame", "HolderManager", "HolderMode", "HolderState", "PartitionHolder",
           "PartitionHolderId", "offer_frame", "poll_batch", "push_downstream"]
