"""Predeployed (prepared) jobs: compile a parameterized spec once, invoke many times."""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass

from .errors import InvalidSpec, InvocationInFlight, UnboundSlot, UnknownDeployedJob
from .runtime.executor import JobInstance
from .runtime.job import compile_spec


@dataclass(frozen=True)
class JobTemplate:
    spec: object
    slots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))


@dataclass(frozen=True)
class DeployedJobId:
    value: int

    def __str__(self):
        return f"deployed-{self.value}"


class JobHandle:
    def __init__(self, registry, job_id, instance, start_latency):
        self._registry = registry
        self.job_id = job_id
        self.instance = instance
        self.start_latency = start_latency

    def wait(self, timeout=None):
        try:
            return self.instance.wait(timeout)
        finally:
            if self.instance.done:
                self._registry._finished(self.job_id, self)

    @property
    def done(self):
        return self.instance.done


def _check_template(template, compiled):
    declared = set(template.slots)
    used = set(compiled.slots)
    if declared != used:
        extra = sorted(declared - used) or sorted(used - declared)
        raise InvalidSpec("slot mismatch", f"slots not used exactly once: {extra}")


class PredeployedRegistry:
    """Per-cluster registry; compiled materials are cached on every node."""

    def __init__(self, cluster):
        self.cluster = cluster
        self.compile_count = 0
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._jobs = {}
        self._inflight = {}

    def deploy(self, template):
        compiled = compile_spec(template.spec)
        _check_template(template, compiled)
        for op in compiled.ops.values():
            for n in op.node_placement:
                if n < 0 or n >= self.cluster.size:
                    raise InvalidSpec("placement mismatch", f"{op.id} placed on unknown node {n}")
        with self._lock:
            self.compile_count += 1
            job_id = DeployedJobId(next(self._ids))
            self._jobs[job_id] = (template, compiled)
            self._inflight[job_id] = set()
        for node in self.cluster.nodes:
            node.deployed[job_id] = compiled
        return job_id

    def invoke(self, job_id, parameters=None):
        t0 = time.perf_counter()
        params = dict(parameters or {})
        with self._lock:
            entry = self._jobs.get(job_id)
            if entry is None:
                raise UnknownDeployedJob(f"{job_id} is not deployed")
            template, _ = entry
            for s in template.slots:
                if s not in params:
                    raise UnboundSlot(s)
        # every node instantiates from its local cache; node 0 drives the run
        compiled = self.cluster.controller.deployed[job_id]
        instance = JobInstance(compiled, self.cluster, params)
        handle = JobHandle(self, job_id, instance, 0.0)
        with self._lock:
            self._inflight[job_id].add(handle)
        instance.start()
        handle.start_latency = time.perf_counter() - t0
        return handle

    def _finished(self, job_id, handle):
        with self._lock:
            s = self._inflight.get(job_id)
            if s is not None:
                s.discard(handle)

    def in_flight(self, job_id):
        with self._lock:
            return sum(1 for h in self._inflight.get(job_id, ()) if not h.done)

    def undeploy(self, job_id):
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownDeployedJob(f"{job_id} is not deployed")
            if any(not h.done for h in self._inflight[job_id]):
                raise InvocationInFlight(f"{job_id} has a running invocation")
            del self._jobs[job_id]
            del self._inflight[job_id]
        for node in self.cluster.nodes:
            node.deployed.pop(job_id, None)

    def deployed(self):
        with self._lock:
            return list(self._jobs)


def cold_run(spec, cluster, parameters=None):
    """Compile, build and run a fully bound spec from scratch (the unprepared path)."""
    compiled = compile_spec(spec)
    for s in compiled.slots:
        if s not in (parameters or {}):
            raise UnboundSlot(s)
    return JobInstance(compiled, cluster, parameters).start().wait()
