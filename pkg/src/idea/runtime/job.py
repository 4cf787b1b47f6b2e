"""Job specifications: operator and connector descriptors forming a DAG."""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass, field

from ..errors import InvalidSpec

OPERATOR_KINDS = ("adapter", "parser", "partitioner", "udf-evaluator", "sink",
                  "partition-holder", "storage-writer", "custom")


class ConnectorKind(enum.Enum):
    ONE_TO_ONE = "OneToOne"
    ROUND_ROBIN = "RoundRobin"
    HASH_PARTITION = "HashPartition"
    BROADCAST = "Broadcast"


@dataclass(frozen=True)
class ConnectorDescriptor:
    kind: ConnectorKind
    source: str
    target: str
    key_fields: tuple = ()


def one_to_one(source, target):
    return ConnectorDescriptor(ConnectorKind.ONE_TO_ONE, source, target)


def round_robin(source, target):
    return ConnectorDescriptor(ConnectorKind.ROUND_ROBIN, source, target)


def hash_partition(source, target, key_fields):
    return ConnectorDescriptor(ConnectorKind.HASH_PARTITION, source, target, tuple(key_fields))


def broadcast(source, target):
    return ConnectorDescriptor(ConnectorKind.BROADCAST, source, target)


class OperatorRuntime:
    """Per-partition operator instance.

    Sources implement ``run``; all others receive frames through
    ``next_frame``. Output goes through ``ctx.writer``.
    """

    def __init__(self, ctx):
        self.ctx = ctx

    def open(self):
        pass

    def run(self):
        raise NotImplementedError

    def next_frame(self, frame):
        raise NotImplementedError

    def close(self):
        pass


@dataclass
class OperatorDescriptor:
    id: str
    kind: str
    partition_count: int
    node_placement: tuple
    factory: object  # callable(TaskContext) -> OperatorRuntime
    source: bool = False
    slots: tuple = ()
    # optional callable(descriptor) run once when the spec is compiled;
    # its result is handed to every partition as ctx.materials
    compile: object = None

    def __post_init__(self):
        self.node_placement = tuple(self.node_placement)
        self.slots = tuple(self.slots)


def spread(partition_count, nodes):
    """Placement putting partition i on node i mod len(nodes)."""
    nodes = list(nodes)
    return tuple(nodes[i % len(nodes)] for i in range(partition_count))


@dataclass
class JobSpec:
    operators: list
    connectors: list
    name: str = "job"

    def operator(self, op_id):
        for op in self.operators:
            if op.id == op_id:
                return op
        raise KeyError(op_id)


@dataclass
class CompiledJob:
    """Validated spec plus everything needed to instantiate it repeatedly."""

    spec: JobSpec
    ops: dict
    order: list
    inbound: dict
    outbound: dict
    chains: list  # lists of op ids executed in one task, head first
    fused: set  # ids of connectors' targets executed inline by their producer
    expected_eofs: dict
    materials: dict = field(default_factory=dict)
    slots: tuple = ()


def compile_spec(spec, run_hooks=True):
    ops = {}
    for op in spec.operators:
        if op.id in ops:
            raise InvalidSpec("duplicate operator", op.id)
        if op.partition_count < 1:
            raise InvalidSpec("placement mismatch", f"{op.id} has no partitions")
        if op.partition_count != len(op.node_placement):
            raise InvalidSpec("placement mismatch",
                              f"{op.id}: {op.partition_count} partitions, "
                              f"{len(op.node_placement)} placements")
        ops[op.id] = op

    inbound = defaultdict(list)
    outbound = defaultdict(list)
    for c in spec.connectors:
        if c.source not in ops or c.target not in ops:
            raise InvalidSpec("dangling connector", f"{c.source} -> {c.target}")
        if c.kind is ConnectorKind.ONE_TO_ONE and \
                ops[c.source].partition_count != ops[c.target].partition_count:
            raise InvalidSpec("arity mismatch",
                              f"OneToOne {c.source}({ops[c.source].partition_count}) -> "
                              f"{c.target}({ops[c.target].partition_count})")
        if c.kind is ConnectorKind.HASH_PARTITION and not c.key_fields:
            raise InvalidSpec("hash connector without key fields", f"{c.source} -> {c.target}")
        outbound[c.source].append(c)
        inbound[c.target].append(c)

    for op in spec.operators:
        if op.source and inbound[op.id]:
            raise InvalidSpec("source with inbound connector", op.id)
        if not op.source and not inbound[op.id]:
            raise InvalidSpec("non-source operator without input", op.id)

    # Kahn's algorithm; leftovers mean a cycle
    indeg = {k: len(inbound[k]) for k in ops}
    queue = deque(op.id for op in spec.operators if indeg[op.id] == 0)
    order = []
    while queue:
        k = queue.popleft()
        order.append(k)
        for c in outbound[k]:
            indeg[c.target] -= 1
            if indeg[c.target] == 0:
                queue.append(c.target)
    if len(order) != len(ops):
        raise InvalidSpec("cycle", ", ".join(sorted(k for k in ops if indeg[k] > 0)))

    seen_slots = {}
    for op in spec.operators:
        for s in op.slots:
            if s in seen_slots:
                raise InvalidSpec("slot bound twice", f"{s} in {seen_slots[s]} and {op.id}")
            seen_slots[s] = op.id

    # fuse OneToOne pipelines into single tasks
    fused = set()
    for k in order:
        outs = outbound[k]
        if len(outs) != 1:
            continue
        c = outs[0]
        if c.kind is ConnectorKind.ONE_TO_ONE and len(inbound[c.target]) == 1 and \
                ops[c.source].node_placement == ops[c.target].node_placement:
            fused.add(c.target)
    chains = []
    for k in order:
        if k in fused:
            continue
        chain = [k]
        while True:
            outs = outbound[chain[-1]]
            if len(outs) == 1 and outs[0].target in fused:
                chain.append(outs[0].target)
            else:
                break
        chains.append(chain)

    expected = {}
    for k in ops:
        n = 0
        for c in inbound[k]:
            n += 1 if c.kind is ConnectorKind.ONE_TO_ONE else ops[c.source].partition_count
        expected[k] = n

    compiled = CompiledJob(spec, ops, order, dict(inbound), dict(outbound), chains, fused,
                           expected, slots=tuple(seen_slots))
    if run_hooks:
        for op in spec.operators:
            if op.compile is not None:
                compiled.materials[op.id] = op.compile(op)
    return compiled
