"""The three evaluation models.

* per record: a fresh invocation for every record, so reference state is
  rebuilt (and fresh) each time;
* per batch: one invocation per batch, shared by every partition working on
  that batch; state is built lazily on first access and dropped afterwards;
* stream: one long-lived invocation whose state is built once at open.
"""

from __future__ import annotations

import threading

from ..datamodel import MISSING
from ..errors import (
    EvaluationError,
    StatefulStreamRejected,
    StreamBuildOverflow,
)
from .functions import Statefulness
from .hashjoin import DEFAULT_BUDGET, JoinStats
from .plan import Compiler

DEFAULT_FRAME_SIZE = 32 * 1024
_NOPE = object()


class EvaluationContext:
    """Where and how functions are evaluated.

    ``storage`` gives dataset access, ``functions`` is the registry,
    ``join_budget`` bounds in-memory join state in bytes (spilling beyond it),
    ``allow_stale_stream`` lets stateful functions run under the stream model.
    """

    def __init__(self, storage, functions, join_budget=DEFAULT_BUDGET, spill_dir=None,
                 allow_stale_stream=False, use_indexes=True, frame_size=DEFAULT_FRAME_SIZE):
        if join_budget is None or join_budget <= frame_size:
            raise ValueError(f"join budget must exceed one frame ({frame_size} bytes)")
        self.storage = storage
        self.functions = functions
        self.join_budget = join_budget
        self.spill_dir = spill_dir
        self.allow_stale_stream = allow_stale_stream
        self.use_indexes = use_indexes
        self._compiler = None
        self._lock = threading.Lock()

    def compiler(self):
        with self._lock:
            if self._compiler is None:
                self._compiler = Compiler(self.storage, self.functions, self.use_indexes)
            return self._compiler

    def function_plan(self, fn):
        c = self.compiler()
        with self._lock:
            return c.function_plan(fn)


class Invocation:
    """Reference-data state for one evaluation scope (a record, a batch or a stream)."""

    def __init__(self, ctx, persistent=False):
        self.ctx = ctx
        self.storage = ctx.storage
        self.budget = ctx.join_budget
        self.spill_dir = ctx.spill_dir
        self.persistent = persistent
        self.join_stats = JoinStats()
        self._states = {}
        self._building = {}
        self._memo = {}
        self._natives = {}
        self._lock = threading.Lock()
        self.builds = 0
        self.build_rows = 0
        self.probes = 0
        self.spills = 0

    def state(self, key, builder):
        v = self._states.get(key, _NOPE)
        if v is not _NOPE:
            return v
        with self._lock:
            lk = self._building.setdefault(key, threading.Lock())
        with lk:
            v = self._states.get(key, _NOPE)
            if v is _NOPE:
                v = builder(self)
                self._states[key] = v
        return v

    def dataset(self, name):
        return self.storage.dataset(name)

    def dataset_rows(self, name):
        return self.state(("dataset", name), lambda inv: list(inv.dataset(name).scan()))

    def memo_for(self, plan_id):
        m = self._memo.get(plan_id)
        if m is None:
            m = self._memo.setdefault(plan_id, {})
        return m

    def new_batch(self):
        self._memo = {}

    def native(self, fn):
        inst = self._natives.get(fn.name)
        if inst is not None:
            return inst
        with self._lock:
            inst = self._natives.get(fn.name)
            if inst is None:
                inst = fn.native()
                inst.initialize(fn.resource_path)
                self._natives[fn.name] = inst
        return inst

    def note_build(self, rows, est):
        self.builds += 1
        self.build_rows += rows

    def note_probe(self):
        self.probes += 1

    def note_spill(self):
        self.spills += 1


class EnrichedBatch(list):
    """Enriched records in input order; ``failures`` holds one EvaluationError
    per skipped input record."""

    def __init__(self, records=(), failures=()):
        super().__init__(records)
        self.failures = list(failures)


def _as_record(v):
    if type(v) is dict:
        return v
    if type(v) is list and len(v) == 1 and type(v[0]) is dict:
        return v[0]  # take-first on a single-row result
    if v is MISSING:
        raise TypeError("function produced no record")
    raise TypeError(f"function must return a record, got {type(v).__name__}")


def _apply(fn, records, inv, base_index=0):
    ctx = inv.ctx
    if fn.native is not None:
        outs, fails = [], {}
        try:
            inst = inv.native(fn)
        except Exception as ex:  # noqa: BLE001 - resource failure fails the whole batch
            return EnrichedBatch([], [EvaluationError(base_index + i, ex)
                                      for i in range(len(records))])
        for i, r in enumerate(records):
            try:
                outs.append(inst.evaluate(r))
            except Exception as ex:  # noqa: BLE001
                outs.append(None)
                fails[i] = ex
    else:
        outs, fails = ctx.function_plan(fn).evaluate_batch(records, inv)
    result = EnrichedBatch()
    for i, v in enumerate(outs):
        if i in fails:
            result.failures.append(EvaluationError(base_index + i, fails[i]))
            continue
        try:
            result.append(_as_record(v))
        except TypeError as ex:
            result.failures.append(EvaluationError(base_index + i, ex))
    return result


def evaluate_batch(fn, batch, ctx, invocation=None):
    """Per-batch model: one invocation (fresh unless given) for the whole batch."""
    inv = invocation if invocation is not None else Invocation(ctx)
    return _apply(fn, list(batch), inv)


def evaluate_record(fn, record, ctx):
    """Per-record model for a single record; raises EvaluationError on failure."""
    out = _apply(fn, [record], Invocation(ctx))
    if out.failures:
        raise out.failures[0]
    return out[0]


def evaluate_per_record(fn, batch, ctx):
    """Per-record model over a sequence: a fresh invocation for each record."""
    result = EnrichedBatch()
    for i, r in enumerate(batch):
        out = _apply(fn, [r], Invocation(ctx), base_index=i)
        result.extend(out)
        result.failures.extend(out.failures)
    return result


def open_stream_evaluator(fn, ctx):
    """Stream model. Stateful functions are rejected unless the context allows
    stale state."""
    if ctx.functions.classify(fn) is Statefulness.STATEFUL and not ctx.allow_stale_stream:
        raise StatefulStreamRejected(
            f"{fn.name} is stateful; the stream model only accepts stateless functions")
    return StreamEvaluator(fn, ctx)


class StreamEvaluator:
    """Evaluates batches against state built once, when the evaluator opens."""

    def __init__(self, fn, ctx):
        self.fn = fn
        self.ctx = ctx
        self.invocation = Invocation(ctx, persistent=True)
        self._prepare()

    def _prepare(self):
        inv = self.invocation
        fns = [self.fn]
        seen = set()
        while fns:
            f = fns.pop()
            if f.name in seen:
                continue
            seen.add(f.name)
            if f.native is not None:
                inv.native(f)
                continue
            fplan = self.ctx.function_plan(f)
            for plan in fplan.plans:
                for step in plan.steps:
                    est = step.prepare(inv)
                    if est > inv.budget:
                        raise StreamBuildOverflow(
                            f"build side of {step.term.dataset} (~{est} bytes) exceeds the "
                            f"join memory budget of {inv.budget} bytes")
            fns.extend(self.ctx.functions.callees(f))

    def apply(self, batch):
        self.invocation.new_batch()
        return _apply(self.fn, list(batch), self.invocation)

    def close(self):
        self.invocation = None
