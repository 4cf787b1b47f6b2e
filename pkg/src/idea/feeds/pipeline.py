"""Runtime of a connected feed: intake job, predeployed computing job, storage
job and the invocation loop that keeps the computing job running.

Data path for a cluster of N nodes:

    adapter[intake nodes] -RR-> intake holder[N]        (intake job, long-running)
    collector[N] -> parse+enrich[N] -> storage sink[N]   (computing job, one run per batch)
    storage holder[N] -hash(pk)-> writer[dataset partitions]   (storage job, long-running)

Intake holders are passive (the computing job pulls batches); storage holders
are active (the storage job drains them). Each computing-job partition pulls
up to ``batch_size`` records from the holder on its own node.
"""

from __future__ import annotations

import statistics
import threading
import time

from ..datamodel import extract_primary_key, parse_json, serialize_record, validate
from ..enrichment import (
    EnrichedBatch,
    Invocation,
    evaluate_batch,
    evaluate_per_record,
)
from ..errors import DuplicateKey, IdeaError
from ..holders import HolderMode, PartitionHolder, PartitionHolderId
from ..predeploy import JobTemplate
from ..runtime import (
    JobSpec,
    OperatorDescriptor,
    OperatorRuntime,
    build_job,
    eof_frame,
    hash_partition,
    one_to_one,
    round_robin,
)
from .descriptor import FeedModel

# how long a computing partition waits for more frames before closing a short batch
LINGER = 0.02
HOLDER_CAPACITY = 32


class FeedMetrics:
    """Counters for one feed run; safe for concurrent updates."""

    def __init__(self):
        self._lock = threading.Lock()
        self.ingested = 0
        self.stored = 0
        self.skipped = 0
        self.failures = []  # first few skip reasons
        self.refresh_periods = []  # seconds per computing-job invocation
        self.start_latencies = []
        self.batch_sizes = []
        self.started = None
        self.finished = None
        self.last_stored_at = None
        self.audit = []  # (invocation, watermark, enriched records) when auditing

    def add(self, **counts):
        with self._lock:
            for k, v in counts.items():
                setattr(self, k, getattr(self, k) + v)
            if counts.get("stored"):
                self.last_stored_at = time.perf_counter()

    def skip(self, n, reason=None):
        with self._lock:
            self.skipped += n
            if reason is not None and len(self.failures) < 20:
                self.failures.append(reason)

    def invocation(self, period, latency, size):
        with self._lock:
            self.refresh_periods.append(period)
            self.start_latencies.append(latency)
            self.batch_sizes.append(size)

    @property
    def elapsed(self):
        if self.started is None:
            return 0.0
        end = self.finished or time.perf_counter()
        return end - self.started

    def throughput(self):
        e = self.elapsed
        return self.stored / e if e > 0 else 0.0

    def median_refresh_ms(self):
        return statistics.median(self.refresh_periods) * 1000 if self.refresh_periods else 0.0


# -- intake job ----------------------------------------------------------------------------------

class _AdapterOp(OperatorRuntime):
    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.feed = feed

    def run(self):
        ctx = self.ctx
        w = ctx.writer
        n = 0
        cancel = ctx.aborted
        try:
            for line in self.feed.source_lines(ctx.partition, cancel):
                if line is None:
                    w.flush()
                    continue
                w.append(line)
                n += 1
                if n % 1024 == 0:
                    self.feed.metrics.add(ingested=1024)
        finally:
            self.feed.metrics.add(ingested=n % 1024)


class _IntakeHolderOp(OperatorRuntime):
    """Tail of the intake job: queue frames in this node's passive holder."""

    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.holder = feed.intake_holder(ctx.partition)

    def next_frame(self, frame):
        self.holder.offer_frame(frame, self.ctx.aborted)

    def close(self):
        self.holder.offer_frame(eof_frame(self.ctx.partition), self.ctx.aborted)


# -- computing job -------------------------------------------------------------------------------

class _CollectorOp(OperatorRuntime):
    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.feed = feed

    def run(self):
        ctx = self.ctx
        ctx.param("invocation")
        holder = self.feed.intake_holder(ctx.partition)
        batch = holder.poll_batch(self.feed.descriptor.batch_size, linger=LINGER,
                                  cancel=ctx.aborted)
        if batch.end_of_feed:
            self.feed.partition_done(ctx.partition)
        if batch.records:
            with ctx.shared_lock:
                ctx.shared["records"] = ctx.shared.get("records", 0) + len(batch.records)
            w = ctx.writer
            for r in batch.records:
                w.append(r)


class _EnrichOp(OperatorRuntime):
    """Parse the collected lines and apply the feed's function to the batch."""

    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.feed = feed
        self.lines = []

    def next_frame(self, frame):
        self.lines.extend(frame.records)

    def close(self):
        feed = self.feed
        if not self.lines:
            return
        records = []
        dtype = feed.input_type
        for line in self.lines:
            try:
                rec = parse_json(line)
                if dtype is not None:
                    validate(rec, dtype)
            except IdeaError as e:
                feed.metrics.skip(1, repr(e))
                continue
            records.append(rec)
        out = feed.enrich(records, self.ctx)
        if out.failures:
            feed.metrics.skip(len(out.failures), repr(out.failures[0]))
        target = feed.target
        ttype = target.descriptor.datatype
        keys = target.key_fields
        w = self.ctx.writer
        audit = feed.audit_keys(self.ctx) if feed.auditing else None
        for rec in out:
            try:
                validate(rec, ttype)
                key = extract_primary_key(rec, keys)
                data = serialize_record(rec)
            except IdeaError as e:
                feed.metrics.skip(1, repr(e))
                continue
            if audit is not None:
                audit.append(rec)
            w.append(data, key)


class _StorageSinkOp(OperatorRuntime):
    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.holder = feed.storage_holder(ctx.partition)

    def next_frame(self, frame):
        self.holder.push_downstream(frame, self.ctx.aborted)


# -- storage job ---------------------------------------------------------------------------------

class _StorageSourceOp(OperatorRuntime):
    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.holder = feed.storage_holder(ctx.partition)

    def run(self):
        w = self.ctx.writer
        while True:
            f = self.holder.next_frame(self.ctx.aborted)
            if f.is_eof:
                return
            w.push_frame(f)


class _StorageWriterOp(OperatorRuntime):
    def __init__(self, ctx, feed):
        super().__init__(ctx)
        self.feed = feed
        self.part = feed.target.partitions[ctx.partition]
        self.mode = feed.descriptor.write_mode

    def next_frame(self, frame):
        part = self.part
        mode = self.mode
        keys = frame.keys
        commits = self.feed.commits
        stored = 0
        for i, data in enumerate(frame.records):
            try:
                seq = part.write(keys[i], data, None, mode, len(data))
                stored += 1
            except DuplicateKey as e:
                self.feed.metrics.skip(1, repr(e))
                continue
            if commits is not None:
                commits.append((seq, data))
        self.feed.metrics.add(stored=stored)


# -- feed runtime --------------------------------------------------------------------------------

class FeedRuntime:
    """Everything a running feed owns. Created by ``start`` and torn down by ``stop``."""

    def __init__(self, db, descriptor, target, function, input_type, stream=None,
                 holder_capacity=HOLDER_CAPACITY, before_invoke=None, audit=False,
                 record_commits=False):
        self.db = db
        self.descriptor = descriptor
        self.target = target
        self.function = function
        self.input_type = input_type
        self.stream = stream
        self.holder_capacity = holder_capacity
        self.before_invoke = before_invoke
        self.auditing = audit
        # (commit seq, serialized record) per stored record when recording
        self.commits = [] if record_commits else None
        self.metrics = FeedMetrics()
        self.nodes = db.cluster.size
        self.error = None
        self._done_parts = set()
        self._lock = threading.Lock()
        self._finished = threading.Event()
        self._source = None
        self._intake = None
        self._storage = None
        self._job_id = None
        self._thread = None
        self._holders = []

    # holders -------------------------------------------------------------------------------
    def _hid(self, kind, p):
        return PartitionHolderId(f"{self.descriptor.name}:{kind}", p)

    def intake_holder(self, p):
        return self.db.cluster.node(p).holders.lookup(self._hid("intake", p))

    def storage_holder(self, p):
        return self.db.cluster.node(p).holders.lookup(self._hid("storage", p))

    def partition_done(self, p):
        with self._lock:
            self._done_parts.add(p)

    @property
    def drained(self):
        with self._lock:
            return len(self._done_parts) == self.nodes

    # enrichment -----------------------------------------------------------------------------
    def enrich(self, records, ctx):
        fn = self.function
        if fn is None:
            return EnrichedBatch(records)
        model = self.descriptor.model
        ectx = self.db.context
        if model is FeedModel.PER_RECORD:
            return evaluate_per_record(fn, records, ectx)
        if model is FeedModel.STREAM:
            return self.stream.apply(records)
        # one invocation per computing-job run, shared by all its partitions
        with ctx.shared_lock:
            inv = ctx.shared.get("invocation")
            if inv is None:
                inv = ctx.shared["invocation"] = Invocation(ectx)
        return evaluate_batch(fn, records, ectx, invocation=inv)

    def audit_keys(self, ctx):
        with ctx.shared_lock:
            return ctx.shared.setdefault("audit", [])

    # lifecycle ---------------------------------------------------------------------------------
    def source_lines(self, partition, cancel):
        src = self._source
        if hasattr(src, "port"):  # one listener per intake partition
            return self._listeners[partition].lines(cancel)
        return src.lines(partition, cancel)

    def _make_source(self):
        from .adapters import FileReplay, LinesReplay, SocketListener
        from .descriptor import FileSource, LinesSource, SocketSource

        a = self.descriptor.adapter
        k = len(self.descriptor.intake_nodes)
        if isinstance(a, SocketSource):
            self._listeners = []
            try:
                for i in range(k):
                    port = a.port + i if a.port else 0
                    self._listeners.append(SocketListener(a.host, port))
            except Exception:
                for lst in self._listeners:
                    lst.stop()
                raise
            self._source = a
            return
        if isinstance(a, FileSource):
            self._source = FileReplay(a.path, a.rate, k)
        elif isinstance(a, LinesSource):
            self._source = LinesReplay(a.lines, a.rate, k)
        else:
            raise TypeError(f"unsupported adapter {a!r}")

    @property
    def addresses(self):
        """Socket addresses clients should connect to (socket feeds only)."""
        return [lst.address for lst in getattr(self, "_listeners", [])]

    def start(self):
        d = self.descriptor
        n = self.nodes
        cluster = self.db.cluster
        self._make_source()
        for p in range(n):
            for kind, mode in (("intake", HolderMode.PASSIVE), ("storage", HolderMode.ACTIVE)):
                h = PartitionHolder(self._hid(kind, p), mode, self.holder_capacity)
                cluster.node(p).holders.register(h)
                self._holders.append((p, h))
        nodes = tuple(range(n))
        feed = self

        storage_spec = JobSpec(
            [OperatorDescriptor("storage-holder", "partition-holder", n, nodes,
                                lambda c: _StorageSourceOp(c, feed), source=True),
             OperatorDescriptor("writer", "storage-writer", self.target.partition_count,
                                tuple(x % n for x in self.target.descriptor.placement),
                                lambda c: _StorageWriterOp(c, feed))],
            [hash_partition("storage-holder", "writer", self.target.key_fields)],
            name=f"{d.name}:storage")
        compute_spec = JobSpec(
            [OperatorDescriptor("collector", "partition-holder", n, nodes,
                                lambda c: _CollectorOp(c, feed), source=True,
                                slots=("invocation",)),
             OperatorDescriptor("enrich", "udf-evaluator", n, nodes,
                                lambda c: _EnrichOp(c, feed)),
             OperatorDescriptor("sink", "sink", n, nodes, lambda c: _StorageSinkOp(c, feed))],
            [one_to_one("collector", "enrich"), one_to_one("enrich", "sink")],
            name=f"{d.name}:compute")
        intake_spec = JobSpec(
            [OperatorDescriptor("adapter", "adapter", len(d.intake_nodes), d.intake_nodes,
                                lambda c: _AdapterOp(c, feed), source=True),
             OperatorDescriptor("intake-holder", "partition-holder", n, nodes,
                                lambda c: _IntakeHolderOp(c, feed))],
            [round_robin("adapter", "intake-holder")],
            name=f"{d.name}:intake")

        self._job_id = self.db.jobs.deploy(JobTemplate(compute_spec, ("invocation",)))
        self.metrics.started = time.perf_counter()
        self._storage = build_job(storage_spec, cluster).start()
        self._intake = build_job(intake_spec, cluster).start()
        self._thread = threading.Thread(target=self._invocation_loop,
                                        name=f"{d.name}:afm", daemon=True)
        self._thread.start()

    def _invocation_loop(self):
        n = 0
        try:
            while not self.drained:
                if self._intake.done and self._intake.wait().failure is not None:
                    raise self._intake.wait().failure
                if self.before_invoke is not None:
                    self.before_invoke(n)
                watermark = self.db.storage.last_commit()
                t0 = time.perf_counter()
                handle = self.db.jobs.invoke(self._job_id, {"invocation": n})
                result = handle.wait()
                period = time.perf_counter() - t0
                result.check()
                size = handle.instance.shared.get("records", 0)
                if size:
                    self.metrics.invocation(period, handle.start_latency, size)
                if self.auditing:
                    self.metrics.audit.append((n, watermark, handle.instance.shared.get("audit", [])))
                n += 1
            for p in range(self.nodes):
                self.storage_holder(p).offer_frame(eof_frame(p))
            self._storage.wait().check()
            self._intake.wait().check()
        except BaseException as e:  # noqa: BLE001 - reported through stop()
            self.error = e
            self._abort()
        finally:
            self.metrics.finished = self.metrics.last_stored_at or time.perf_counter()
            self._finished.set()

    def _abort(self):
        for job in (self._intake, self._storage):
            if job is not None:
                job.abort()
        for _, h in self._holders:
            h.close()

    def stop_intake(self):
        if hasattr(self, "_listeners"):
            for lst in self._listeners:
                lst.stop()
        elif self._source is not None:
            self._source.stop()

    def wait(self, timeout=None):
        """Wait for the feed to drain on its own (finite sources)."""
        return self._finished.wait(timeout)

    def stop(self, timeout=None):
        self.stop_intake()
        if not self._finished.wait(timeout):
            self._abort()
            self._finished.wait(5)
            raise TimeoutError(f"feed {self.descriptor.name} did not drain in {timeout}s")
        self._teardown()
        if self.error is not None:
            raise self.error
        return self.metrics

    def _teardown(self):
        if self._job_id is not None:
            try:
                self.db.jobs.undeploy(self._job_id)
            except IdeaError:
                pass
            self._job_id = None
        for p, h in self._holders:
            try:
                self.db.cluster.node(p).holders.deregister(h.id)
            except IdeaError:
                pass
        self._holders = []


class _StaticEnrichOp(_EnrichOp):
    """Parse and enrich frame by frame inside one long-running job."""

    def next_frame(self, frame):
        self.lines = frame.records
        _EnrichOp.close(self)
        self.lines = []

    def close(self):
        pass


class StaticFeedRuntime(FeedRuntime):
    """Single long-running job from adapter to storage with no per-batch
    invocations; a function, if any, runs against state built once at start."""

    def enrich(self, records, ctx):
        if self.function is None:
            return EnrichedBatch(records)
        return self.stream.apply(records)

    def start(self):
        d = self.descriptor
        n = self.nodes
        feed = self
        self._make_source()
        nodes = tuple(range(n))
        spec = JobSpec(
            [OperatorDescriptor("adapter", "adapter", len(d.intake_nodes), d.intake_nodes,
                                lambda c: _AdapterOp(c, feed), source=True),
             OperatorDescriptor("enrich", "udf-evaluator", n, nodes,
                                lambda c: _StaticEnrichOp(c, feed)),
             OperatorDescriptor("writer", "storage-writer", self.target.partition_count,
                                tuple(x % n for x in self.target.descriptor.placement),
                                lambda c: _StorageWriterOp(c, feed))],
            [round_robin("adapter", "enrich"),
             hash_partition("enrich", "writer", self.target.key_fields)],
            name=f"{d.name}:static")
        self.metrics.started = time.perf_counter()
        self._intake = build_job(spec, self.db.cluster).start()
        self._thread = threading.Thread(target=self._wait_job, name=f"{d.name}:static",
                                        daemon=True)
        self._thread.start()

    def _wait_job(self):
        try:
            self._intake.wait().check()
        except BaseException as e:  # noqa: BLE001
            self.error = e
        finally:
            self.metrics.finished = self.metrics.last_stored_at or time.perf_counter()
            self._finished.set()


__all__ = ["FeedMetrics", "FeedRuntime", "StaticFeedRuntime"]
