import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea.errors import InvalidSpec, InvocationInFlight, UnboundSlot, UnknownDeployedJob
from idea.predeploy import JobTemplate, PredeployedRegistry, cold_run
from idea.runtime import Cluster, JobSpec, OperatorDescriptor, OperatorRuntime, one_to_one


class BatchSource(OperatorRuntime):
    def run(self):
        for r in self.ctx.param("batch"):
            self.ctx.writer.append(r)


class Gate(OperatorRuntime):
    release = threading.Event()

    def next_frame(self, frame):
        self.release.wait(5)


class Collect(OperatorRuntime):
    def next_frame(self, frame):
        with self.ctx.shared_lock:
            self.ctx.shared.setdefault("out", []).extend(frame.records)


def spec(sink=Collect):
    return JobSpec([OperatorDescriptor("src", "source", 1, (0,), BatchSource, source=True,
                                       slots=("batch",)),
                    OperatorDescriptor("sink", "sink", 1, (0,), sink)],
                   [one_to_one("src", "sink")], name="t")


def test_compiles_once_across_invocations():
    reg = PredeployedRegistry(Cluster(2))
    jid = reg.deploy(JobTemplate(spec(), ("batch",)))
    assert reg.compile_count == 1
    for _ in range(3):
        h = reg.invoke(jid, {"batch": [b"x"] * 420})
        h.wait().check()
        assert len(h.instance.shared["out"]) == 420
    assert reg.compile_count == 1


def test_distinct_ids_and_bad_templates():
    reg = PredeployedRegistry(Cluster(1))
    a = reg.deploy(JobTemplate(spec(), ("batch",)))
    b = reg.deploy(JobTemplate(spec(), ("batch",)))
    assert a != b
    with pytest.raises(InvalidSpec):
        reg.deploy(JobTemplate(spec(), ("other",)))
    bad = JobSpec([OperatorDescriptor("src", "source", 1, (3,), BatchSource, source=True,
                                      slots=("batch",))], [])
    with pytest.raises(InvalidSpec):
        reg.deploy(JobTemplate(bad, ("batch",)))


def test_invoke_errors():
    reg = PredeployedRegistry(Cluster(1))
    jid = reg.deploy(JobTemplate(spec(), ("batch",)))
    with pytest.raises(UnboundSlot):
        reg.invoke(jid, {})
    reg.undeploy(jid)
    with pytest.raises(UnknownDeployedJob):
        reg.invoke(jid, {"batch": []})
    with pytest.raises(UnknownDeployedJob):
        reg.undeploy(jid)


def test_undeploy_while_running():
    Gate.release.clear()
    reg = PredeployedRegistry(Cluster(1))
    jid = reg.deploy(JobTemplate(spec(Gate), ("batch",)))
    h = reg.invoke(jid, {"batch": [b"x"]})
    with pytest.raises(InvocationInFlight):
        reg.undeploy(jid)
    Gate.release.set()
    h.wait().check()
    reg.undeploy(jid)


@given(st.lists(st.binary(max_size=8), max_size=300))
@settings(max_examples=30, deadline=None)
def test_invoke_matches_cold_run(batch):
    cluster = Cluster(1)
    reg = PredeployedRegistry(cluster)
    jid = reg.deploy(JobTemplate(spec(), ("batch",)))
    h = reg.invoke(jid, {"batch": batch})
    h.wait().check()
    warm = h.instance.shared.get("out", [])
    # cold path: fresh instance, results read through a capturing sink
    captured = []

    class Capture(OperatorRuntime):
        def next_frame(self, frame):
            captured.extend(frame.records)

    cold_run(spec(Capture), cluster, {"batch": batch}).check()
    assert warm == captured == list(batch)
