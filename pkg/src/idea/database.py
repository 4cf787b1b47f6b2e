"""An in-process database: a simulated cluster, its storage, functions and feeds,
driven by DDL/DML scripts."""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .datamodel import Datatype, FieldSpec, normalize_kind
from .ddl import ast as A
from .ddl import parse_script
from .enrichment import (
    DEFAULT_BUDGET,
    EvaluationContext,
    FunctionRegistry,
    Invocation,
    open_stream_evaluator,
)
from .enrichment.plan import INV, BlockPlan, Scope
from .errors import (
    CatalogError,
    IllegalFeedState,
    UnknownDataset,
    UnknownFeed,
    UnknownFunction,
    ValidationError,
)
from .feeds.descriptor import (
    FeedDescriptor,
    FeedModel,
    FeedState,
    FeedStateMachine,
    descriptor_from_options,
)
from .feeds.pipeline import HOLDER_CAPACITY, FeedRuntime, StaticFeedRuntime
from .predeploy import PredeployedRegistry
from .runtime import Cluster
from .storage.store import IndexKind, Storage


@dataclass
class _Feed:
    descriptor: FeedDescriptor
    machine: FeedStateMachine
    runtime: FeedRuntime = None
    last_metrics: object = None


class Database:
    """One simulated cluster of ``nodes`` nodes with its catalog."""

    def __init__(self, nodes=1, log_dir=None, spill_dir=None, join_budget=DEFAULT_BUDGET,
                 resources=None, use_indexes=True):
        self.cluster = Cluster(nodes)
        self.storage = Storage(nodes, log_dir)
        self.functions = FunctionRegistry()
        self.functions.install_library("testlib", resources)
        self.jobs = PredeployedRegistry(self.cluster)
        self.types = {}
        self.feeds = {}
        self._lock = threading.Lock()
        self.context = EvaluationContext(self.storage, self.functions, join_budget, spill_dir,
                                         use_indexes=use_indexes)

    @property
    def nodes(self):
        return self.cluster.size

    # scripts -------------------------------------------------------------------------------------
    def execute(self, script):
        """Run every statement of ``script``; returns one result per statement
        (a list for queries, a count for INSERT/UPSERT, None otherwise)."""
        return [self.execute_statement(s) for s in parse_script(script)]

    def query(self, text):
        results = [r for r in self.execute(text) if r is not None]
        return results[-1] if results else None

    def execute_statement(self, stmt):
        handler = getattr(self, "_x_" + type(stmt).__name__, None)
        if handler is None:
            raise CatalogError(f"cannot execute {type(stmt).__name__}")
        return handler(stmt)

    def _x_CreateType(self, s):
        if s.name in self.types:
            raise CatalogError(f"type {s.name!r} already exists")
        fields = []
        for f in s.fields:
            if f.type_name in self.types:
                kind = "object"
            else:
                kind = normalize_kind(f.type_name)
            fields.append(FieldSpec(f.name, kind, f.optional))
        self.types[s.name] = Datatype(s.name, tuple(fields), s.open)

    def datatype(self, name):
        try:
            return self.types[name]
        except KeyError:
            raise CatalogError(f"unknown type {name!r}") from None

    def _x_CreateDataset(self, s):
        self.storage.create_dataset(s.name, self.datatype(s.type_name), s.primary_key)

    def _x_CreateIndex(self, s):
        try:
            kind = IndexKind[s.kind.upper()]
        except KeyError:
            raise CatalogError(f"unknown index kind {s.kind!r}") from None
        self.storage.create_index(s.dataset, s.name, kind, s.field)

    def _x_CreateFunction(self, s):
        self.functions.define(s)

    def _x_CreateFeed(self, s):
        self.create_feed(descriptor_from_options(s.name, s.options, self.nodes))

    def _x_ConnectFeed(self, s):
        self.connect_feed(s.feed, s.dataset, s.function)

    def _x_StartFeed(self, s):
        self.start_feed(s.feed)

    def _x_StopFeed(self, s):
        self.stop_feed(s.feed)

    def _x_Query(self, s):
        return self.evaluate(s.body)

    def _x_Insert(self, s):
        return self._write(s, "insert")

    def _x_Upsert(self, s):
        return self._write(s, "upsert")

    def _write(self, s, mode):
        ds = self.storage.dataset(s.dataset)
        value = self.evaluate(s.body)
        records = value if type(value) is list else [value]
        for r in records:
            if type(r) is not dict:
                raise ValidationError(["value is not a record"], ds.descriptor.datatype.name)
        for r in records:
            (ds.insert if mode == "insert" else ds.upsert)(r)
        return len(records)

    def evaluate(self, body):
        """Evaluate a query block or expression with a fresh invocation."""
        c = self.context.compiler()
        with self.context._lock:
            if isinstance(body, A.SelectBlock):
                plan = BlockPlan(c, body, Scope({INV}), top=True)
                run = plan.run_entry
            else:
                fn = c.expr(body, Scope({INV}))
                run = fn
        return run({INV: Invocation(self.context)})

    # feeds ------------------------------------------------------------------------------------
    def _feed(self, name):
        try:
            return self.feeds[name]
        except KeyError:
            raise UnknownFeed(f"unknown feed {name!r}") from None

    def create_feed(self, descriptor):
        self.datatype(descriptor.type_name)
        with self._lock:
            if descriptor.name in self.feeds:
                raise CatalogError(f"feed {descriptor.name!r} already exists")
            self.feeds[descriptor.name] = _Feed(descriptor, FeedStateMachine(descriptor.name))

    def connect_feed(self, feed, dataset, function=None):
        f = self._feed(feed)
        f.machine.require(FeedState.CREATED, FeedState.STOPPED)
        if not self.storage.has_dataset(dataset):
            raise UnknownDataset(f"unknown dataset {dataset!r}")
        if function is not None:
            fn = self.functions.lookup(function)
            if fn is None:
                raise UnknownFunction(f"unknown function {function}")
            if fn.arity != 1:
                raise UnknownFunction(f"{function} takes {fn.arity} arguments; a feed needs 1")
        f.descriptor.target_dataset = dataset
        f.descriptor.function = function
        f.machine.move(FeedState.CONNECTED)

    def start_feed(self, feed, model=None, batch_size=None, before_invoke=None, audit=False,
                   holder_capacity=HOLDER_CAPACITY, static=False, record_commits=False):
        """Start a connected feed. ``static`` runs the single long-running job
        variant without per-batch computing jobs. ``record_commits`` keeps the
        commit sequence number of every stored record on the runtime."""
        f = self._feed(feed)
        f.machine.require(FeedState.CONNECTED, FeedState.STOPPED)
        if f.descriptor.target_dataset is None:
            raise IllegalFeedState(f"feed {feed} is not connected to a dataset")
        d = f.descriptor
        if model is not None:
            d.model = model if isinstance(model, FeedModel) else FeedModel.parse(model)
        if batch_size is not None:
            d.batch_size = int(batch_size)
            if d.batch_size < 1:
                raise ValueError("batch size must be positive")
        fn = self.functions.get(d.function) if d.function else None
        stream = None
        if fn is not None and (static or d.model is FeedModel.STREAM):
            stream = open_stream_evaluator(fn, self.context)
        cls = StaticFeedRuntime if static else FeedRuntime
        rt = cls(self, d, self.storage.dataset(d.target_dataset), fn, self.datatype(d.type_name),
                 stream=stream, holder_capacity=holder_capacity, before_invoke=before_invoke,
                 audit=audit, record_commits=record_commits)
        rt.start()
        f.runtime = rt
        f.machine.move(FeedState.RUNNING)
        return rt

    def stop_feed(self, feed, timeout=None):
        f = self._feed(feed)
        f.machine.require(FeedState.RUNNING)
        f.machine.move(FeedState.STOPPING)
        try:
            metrics = f.runtime.stop(timeout)
        finally:
            f.machine.move(FeedState.STOPPED)
            f.last_metrics = f.runtime.metrics
            f.runtime = None
        return metrics

    def feed_state(self, feed):
        return self._feed(feed).machine.state

    def feed_runtime(self, feed):
        return self._feed(feed).runtime

    def close(self):
        for name, f in list(self.feeds.items()):
            if f.machine.state is FeedState.RUNNING:
                try:
                    self.stop_feed(name, timeout=30)
                except Exception:  # noqa: BLE001 - best effort on shutdown
                    pass
        self.storage.close()


__all__ = ["Database"]
