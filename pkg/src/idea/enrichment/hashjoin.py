"""Equi-join with a memory budget: in-memory build when it fits, otherwise
Grace partitioning to spill files with recursive re-partitioning and a
block nested-loop fallback for partitions that cannot be split further."""

from __future__ import annotations

import math
import os
import shutil
import struct
import tempfile

from ..datamodel import deserialize_value, serialize_value
from ..errors import SpillIOError
from ..hashing import stable_hash
from .values import join_key

DEFAULT_BUDGET = 8 * 1024 * 1024
MAX_DEPTH = 4
_LEN = struct.Struct(">I")


class JoinStats:
    def __init__(self):
        self.partitions = 0      # spill partitions created at the top level
        self.max_depth = 0       # deepest recursion level reached
        self.spilled_rows = 0
        self.fallbacks = 0       # partitions joined by block nested loop

    def __repr__(self):
        return (f"JoinStats(partitions={self.partitions}, max_depth={self.max_depth}, "
                f"spilled_rows={self.spilled_rows}, fallbacks={self.fallbacks})")


def _size(row):
    return len(serialize_value(row))


def _key_bytes(nkey):
    if type(nkey) is tuple:
        nkey = list(nkey)
    return serialize_value(nkey)


class _SpillFile:
    def __init__(self, path):
        self.path = path
        self.count = 0
        self.bytes = 0
        try:
            self._fh = open(path, "wb")
        except OSError as e:
            raise SpillIOError(f"cannot create spill file {path}: {e}") from e

    def write(self, nkey, row, size):
        data = serialize_value([_freeze_to_wire(nkey), row])
        try:
            self._fh.write(_LEN.pack(len(data)))
            self._fh.write(data)
        except OSError as e:
            raise SpillIOError(f"spill write failed: {e}") from e
        self.count += 1
        self.bytes += size

    def close(self):
        self._fh.close()

    def read(self):
        try:
            with open(self.path, "rb") as fh:
                while True:
                    head = fh.read(4)
                    if not head:
                        return
                    if len(head) < 4:
                        raise SpillIOError(f"truncated spill file {self.path}")
                    (n,) = _LEN.unpack(head)
                    data = fh.read(n)
                    if len(data) < n:
                        raise SpillIOError(f"truncated spill file {self.path}")
                    wire, row = deserialize_value(data)
                    yield _freeze_from_wire(wire), row
        except OSError as e:
            raise SpillIOError(f"spill read failed: {e}") from e


# normalized keys may contain tuples, which the wire format turns into lists;
# tag them so they come back identical
def _freeze_to_wire(k):
    if type(k) is tuple:
        return {"t": [_freeze_to_wire(x) for x in k]}
    return k


def _freeze_from_wire(k):
    if type(k) is dict:
        return tuple(_freeze_from_wire(x) for x in k["t"])
    return k


def hash_join(build, probe, build_key, probe_key, budget=DEFAULT_BUDGET, residual=None,
              spill_dir=None, row_size=None, stats=None):
    """Join ``probe`` rows against ``build`` rows on equal keys.

    Returns (probe_row, build_row) pairs whose normalized keys are equal and,
    if given, ``residual(probe_row, build_row)`` is true. Rows that may spill
    must be data-model values. ``row_size`` overrides the per-row byte estimate
    (an int, or a callable on the row).
    """
    if budget is not None and budget <= 0:
        raise ValueError("budget must be positive")
    stats = stats if stats is not None else JoinStats()
    sizer = row_size if callable(row_size) else ((lambda r, n=row_size: n) if row_size else _size)
    bside = []
    total = 0
    for row in build:
        k = join_key(build_key(row))
        if k is None:
            continue
        s = sizer(row) if budget is not None else 0
        bside.append((k, row, s))
        total += s
    pside = []
    for row in probe:
        k = join_key(probe_key(row))
        if k is not None:
            pside.append((k, row))
    out = []
    if budget is None or total <= budget:
        _join_memory(bside, pside, residual, out)
        return out
    if spill_dir is not None and not os.path.isdir(spill_dir):
        raise SpillIOError(f"spill directory {spill_dir!r} does not exist")
    tmp = tempfile.mkdtemp(prefix="idea-spill-", dir=spill_dir)
    try:
        _grace(bside, pside, total, budget, residual, out, tmp, 0, stats, sizer)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return out


def _join_memory(bside, pside, residual, out):
    table = {}
    for k, row, _ in bside:
        lst = table.get(k)
        if lst is None:
            table[k] = [row]
        else:
            lst.append(row)
    for k, prow in pside:
        matches = table.get(k)
        if matches:
            for brow in matches:
                if residual is None or residual(prow, brow):
                    out.append((prow, brow))


def _fanout(total, budget):
    return max(2, min(8, math.ceil(total / budget)))


def _grace(bside, pside, total, budget, residual, out, tmp, level, stats, sizer):
    stats.max_depth = max(stats.max_depth, level)
    fan = _fanout(total, budget)
    if level == 0:
        stats.partitions = fan
    salt = level + 1
    bfiles = [_SpillFile(os.path.join(tmp, f"b{level}_{i}")) for i in range(fan)]
    pfiles = [_SpillFile(os.path.join(tmp, f"p{level}_{i}")) for i in range(fan)]
    try:
        for k, row, s in bside:
            bfiles[stable_hash(_key_bytes(k), salt) % fan].write(k, row, s)
            stats.spilled_rows += 1
        for k, row in pside:
            pfiles[stable_hash(_key_bytes(k), salt) % fan].write(k, row, 0)
    finally:
        for f in bfiles + pfiles:
            f.close()
    del bside, pside
    for bf, pf in zip(bfiles, pfiles):
        if bf.count == 0 or pf.count == 0:
            continue
        if bf.bytes <= budget:
            b = [(k, row, 0) for k, row in bf.read()]
            _join_memory(b, list(pf.read()), residual, out)
        elif level + 1 < MAX_DEPTH and bf.bytes < total:
            b = [(k, row, sizer(row)) for k, row in bf.read()]
            _grace(b, list(pf.read()), bf.bytes, budget, residual, out,
                   tmp, level + 1, stats, sizer)
        else:
            stats.fallbacks += 1
            _block_nested_loop(bf, pf, budget, residual, out, sizer)


def _block_nested_loop(bf, pf, budget, residual, out, sizer):
    """Load the build partition in budget-sized blocks and scan the probe file per block."""
    block = []
    used = 0
    for k, row in bf.read():
        s = sizer(row)
        if block and used + s > budget:
            _join_memory(block, list(pf.read()), residual, out)
            block, used = [], 0
        block.append((k, row, 0))
        used += s
    if block:
        _join_memory(block, list(pf.read()), residual, out)


def nested_loop_join(build, probe, build_key, probe_key, residual=None):
    """Reference oracle: every probe row against every build row."""
    out = []
    bkeys = [(join_key(build_key(b)), b) for b in build]
    for p in probe:
        pk = join_key(probe_key(p))
        if pk is None:
            continue
        for bk, b in bkeys:
            if bk is not None and bk == pk and (residual is None or residual(p, b)):
                out.append((p, b))
    return out
