"""Job execution over a simulated cluster of node contexts.

Every task (a chain of OneToOne-fused operator partitions) runs on its own
thread tagged with the node it is placed on. Tasks exchange frames through
bounded inboxes; a failure anywhere aborts the whole job.
"""

from __future__ import annotations

import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from ..errors import InvalidSpec, JobAborted, OperatorFailure
from .connectors import OUTPUT_CLASSES
from .frames import Frame, FrameAppender, eof_frame
from .job import compile_spec

INBOX_CAPACITY = 64


class Inbox:
    """Bounded multi-producer, single-consumer frame queue that can be aborted."""

    def __init__(self, capacity=INBOX_CAPACITY):
        self.capacity = capacity
        self._q = deque()
        self._cond = threading.Condition()
        self._aborted = False

    def put(self, frame):
        with self._cond:
            while len(self._q) >= self.capacity and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise JobAborted()
            self._q.append(frame)
            self._cond.notify_all()

    def get(self):
        with self._cond:
            while not self._q and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise JobAborted()
            f = self._q.popleft()
            self._cond.notify_all()
            return f

    def abort(self):
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


class NodeContext:
    def __init__(self, node_id, cluster):
        from ..holders import HolderManager

        self.node_id = node_id
        self.cluster = cluster
        self.holders = HolderManager(node_id)
        self.deployed = {}
        self.services = {}

    def __repr__(self):
        return f"NodeContext({self.node_id})"


class Cluster:
    """N simulated nodes in one process; node 0 doubles as the controller."""

    def __init__(self, nodes=1):
        if nodes < 1:
            raise ValueError("a cluster needs at least one node")
        self.nodes = [NodeContext(i, self) for i in range(nodes)]
        self.services = {}

    @property
    def size(self):
        return len(self.nodes)

    @property
    def controller(self):
        return self.nodes[0]

    def node(self, i):
        return self.nodes[i]


@dataclass
class OpStats:
    records_in: int = 0
    records_out: int = 0


class TaskContext:
    def __init__(self, instance, op, partition):
        self.instance = instance
        self.op = op
        self.op_id = op.id
        self.partition = partition
        self.partitions = op.partition_count
        self.node = instance.cluster.node(op.node_placement[partition])
        self.params = instance.params
        self.shared = instance.shared
        self.shared_lock = instance.shared_lock
        self.materials = instance.compiled.materials.get(op.id)
        self.stats = OpStats()
        self.writer = None

    @property
    def aborted(self):
        return self.instance.abort_event

    def param(self, slot):
        return self.instance.params[slot]


class _OpError(Exception):
    """Carries the id of the fused operator that actually failed."""

    def __init__(self, op_id, cause):
        super().__init__(op_id, cause)
        self.op_id = op_id
        self.cause = cause


class Writer:
    """What an operator writes to: fans records out to its downstream links."""

    def __init__(self, ctx, outputs, direct=None, direct_ctx=None):
        self.ctx = ctx
        self.outputs = outputs
        self.direct = direct
        self.direct_ctx = direct_ctx
        self.app = FrameAppender(self._direct_emit, ctx.partition) if direct else None

    def _direct_emit(self, frame):
        self.direct_ctx.stats.records_in += len(frame.records)
        try:
            self.direct.next_frame(frame)
        except (JobAborted, _OpError):
            raise
        except BaseException as e:  # noqa: BLE001
            raise _OpError(self.direct_ctx.op_id, e) from e

    def append(self, record, key=None):
        self.ctx.stats.records_out += 1
        if self.app is not None:
            self.app.append(record, key)
        for o in self.outputs:
            o.append(record, key)

    def push_frame(self, frame):
        if frame.is_eof:
            return
        self.ctx.stats.records_out += len(frame.records)
        if self.app is not None:
            self.app.flush()
            self._direct_emit(frame)
        for o in self.outputs:
            o.push_frame(frame)

    def flush(self):
        if self.app is not None:
            self.app.flush()
        for o in self.outputs:
            o.flush()


@dataclass
class JobResult:
    name: str
    records_in: dict = field(default_factory=dict)
    records_out: dict = field(default_factory=dict)
    wall_time: float = 0.0
    failure: OperatorFailure = None

    @property
    def ok(self):
        return self.failure is None

    def check(self):
        if self.failure is not None:
            raise self.failure
        return self


_job_ids = itertools.count(1)


class JobInstance:
    def __init__(self, compiled, cluster, params=None):
        self.compiled = compiled
        self.cluster = cluster
        self.params = dict(params or {})
        self.shared = {}
        self.shared_lock = threading.Lock()
        self.abort_event = threading.Event()
        self.job_id = next(_job_ids)
        self.name = compiled.spec.name
        self._failure = None
        self._fail_lock = threading.Lock()
        self._threads = []
        self._contexts = {}
        self._inboxes = {}
        self._started = None
        self._finished = None
        self._result = None
        self._done = threading.Event()
        self._build()

    # -- wiring -----------------------------------------------------------------
    def _build(self):
        c = self.compiled
        for op in c.ops.values():
            for node in op.node_placement:
                if node < 0 or node >= self.cluster.size:
                    raise InvalidSpec("placement mismatch", f"{op.id} placed on unknown node {node}")
        for k, op in c.ops.items():
            for p in range(op.partition_count):
                self._contexts[(k, p)] = TaskContext(self, op, p)
            if k not in c.fused and not op.source:
                self._inboxes[k] = {p: Inbox() for p in range(op.partition_count)}
        self._tasks = []
        for chain in c.chains:
            head = c.ops[chain[0]]
            for p in range(head.partition_count):
                self._tasks.append((chain, p))

    def _make_runtimes(self, chain, p):
        c = self.compiled
        runtimes = []
        for k in chain:
            ctx = self._contexts[(k, p)]
            runtimes.append(c.ops[k].factory(ctx))
        # wire writers from the tail backwards
        for i in reversed(range(len(chain))):
            k = chain[i]
            ctx = self._contexts[(k, p)]
            outputs = []
            if i + 1 < len(chain):
                ctx.writer = Writer(ctx, [], runtimes[i + 1], self._contexts[(chain[i + 1], p)])
                continue
            for conn in c.outbound.get(k, ()):
                outputs.append(OUTPUT_CLASSES[conn.kind](conn, p, self._inboxes[conn.target], None))
            ctx.writer = Writer(ctx, outputs)
        return runtimes

    # -- execution ----------------------------------------------------------------
    def start(self):
        if self._started is not None:
            raise RuntimeError("job already started")
        self._started = time.perf_counter()
        for chain, p in self._tasks:
            node = self.compiled.ops[chain[0]].node_placement[p]
            t = threading.Thread(target=self._run_task, args=(chain, p),
                                 name=f"{self.name}:{chain[0]}[{p}]@n{node}", daemon=True)
            self._threads.append(t)
        for t in self._threads:
            t.start()
        waiter = threading.Thread(target=self._await_all, name=f"{self.name}:join", daemon=True)
        waiter.start()
        return self

    def _await_all(self):
        for t in self._threads:
            t.join()
        self._finished = time.perf_counter()
        self._result = self._collect()
        self._done.set()

    def _run_task(self, chain, p):
        c = self.compiled
        current = chain[0]
        try:
            runtimes = self._make_runtimes(chain, p)
            for k, rt in zip(chain, runtimes):
                current = k
                rt.open()
            head = runtimes[0]
            current = chain[0]
            ctx = self._contexts[(chain[0], p)]
            if c.ops[chain[0]].source:
                head.run()
            else:
                inbox = self._inboxes[chain[0]][p]
                remaining = c.expected_eofs[chain[0]]
                while remaining:
                    f = inbox.get()
                    if f.is_eof:
                        remaining -= 1
                        continue
                    ctx.stats.records_in += len(f.records)
                    head.next_frame(f)
            for k, rt in zip(chain, runtimes):
                current = k
                rt.close()
                self._contexts[(k, p)].writer.flush()
            tail = chain[-1]
            for conn in c.outbound.get(tail, ()):
                targets = [p] if conn.kind.value == "OneToOne" else \
                    range(c.ops[conn.target].partition_count)
                for t in targets:
                    self._inboxes[conn.target][t].put(eof_frame(p))
        except JobAborted:
            pass
        except _OpError as e:
            self._fail(OperatorFailure(e.op_id, e.cause, p))
        except BaseException as e:  # noqa: BLE001 - any operator error fails the job
            self._fail(OperatorFailure(current, e, p))

    def _fail(self, failure):
        with self._fail_lock:
            if self._failure is None:
                self._failure = failure
        self.abort()

    def abort(self):
        self.abort_event.set()
        for boxes in self._inboxes.values():
            for b in boxes.values():
                b.abort()

    def wait(self, timeout=None):
        if self._started is None:
            raise RuntimeError("job not started")
        if not self._done.wait(timeout):
            raise TimeoutError(f"job {self.name} did not finish in {timeout}s")
        return self._result

    @property
    def done(self):
        return self._done.is_set()

    def _collect(self):
        res = JobResult(self.name, failure=self._failure)
        for (k, _p), ctx in self._contexts.items():
            res.records_in[k] = res.records_in.get(k, 0) + ctx.stats.records_in
            res.records_out[k] = res.records_out.get(k, 0) + ctx.stats.records_out
        res.wall_time = (self._finished or time.perf_counter()) - self._started
        return res


def build_job(spec, cluster, params=None):
    """Validate ``spec`` and wire one operator instance per declared partition."""
    compiled = compile_spec(spec)
    missing = [s for s in compiled.slots if s not in (params or {})]
    if missing:
        from ..errors import UnboundSlot
        raise UnboundSlot(missing[0])
    return JobInstance(compiled, cluster, params)


def run_job(instance, timeout=None):
    return instance.start().wait(timeout)


def instance_contexts(instance):
    return instance._contexts


__all__ = ["Cluster", "NodeContext", "JobInstance", "JobResult", "build_job", "run_job",
           "Inbox", "Frame"]
