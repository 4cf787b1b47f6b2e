"""Hash-partitioned datasets with primary-key storage and secondary indexes.

Each partition keeps two components: an immutable, bulk-loaded base (sorted
key list plus dictionary) and an in-memory ordered map receiving every later
write. Reads consult the in-memory component first. Scans over a partition
whose in-memory component is empty walk the base directly; once writes have
arrived, scans merge both components, which is noticeably more expensive.
Every read returns the latest committed version at the moment the key is
reached, which gives record-level consistency.

Secondary indexes follow the same split: a base structure built from the
data present when the index is created (or bulk loaded), an in-memory
structure for entries written afterwards, and a set of base keys whose
entries have been superseded. Once writes arrive every probe consults both
components and filters superseded entries.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
import os
import struct
import threading
from dataclasses import dataclass, field
from itertools import islice

from sortedcontainers import SortedDict, SortedList

from ..datamodel import (
    MISSING,
    Circle,
    Point,
    Rectangle,
    deserialize_record,
    encode_key_value,
    extract_primary_key,
    get_path,
    serialize_record,
    validate,
)
from ..errors import (
    ArgumentTypeError,
    CatalogError,
    CorruptRecord,
    DuplicateKey,
    UnknownDataset,
    UnknownIndex,
)
from ..geometry import bounding_box, point_in_circle
from ..hashing import partition_of
from .rtree import RTree

_MERGE_CHUNK = 64


class _BTreeIndex:
    """Sorted (index key, primary key) entries in base and in-memory components."""

    def __init__(self, desc, entries=()):
        self.desc = desc
        self.base = SortedList(entries)
        self.mem = SortedList()
        self.mem_keys = {}
        self.dead = set()

    def apply(self, key, old, new):
        if old is not None:
            if key in self.mem_keys:
                self.mem.remove((old, key))
                del self.mem_keys[key]
            else:
                self.dead.add(key)
        if new is not None:
            self.mem.add((new, key))
            self.mem_keys[key] = new

    def irange(self, lo):
        def part(sl):
            return sl.irange(minimum=(lo,)) if lo is not None else iter(sl)

        base = part(self.base)
        if self.dead:
            dead = self.dead
            base = (e for e in base if e[1] not in dead)
        if not self.mem:
            return base
        return heapq.merge(base, part(self.mem))

    def entries(self):
        return list(self.irange(None))


class _RTreeIndex:
    """Point boxes in a bulk-loaded base tree and an in-memory tree."""

    def __init__(self, desc, items=()):
        self.desc = desc
        self.base = RTree.bulk_load(list(items))
        self.mem = RTree()
        self.mem_boxes = {}
        self.dead = set()

    def apply(self, key, old, new):
        if old is not None:
            if key in self.mem_boxes:
                self.mem.delete(old, key)
                del self.mem_boxes[key]
            else:
                self.dead.add(key)
        if new is not None:
            self.mem.insert(new, key)
            self.mem_boxes[key] = new

    def search(self, box):
        pks = self.base.search(box)
        if self.dead:
            dead = self.dead
            pks = [k for k in pks if k not in dead]
        if self.mem_boxes:
            pks.extend(self.mem.search(box))
        return pks

    def items(self):
        dead = self.dead
        out = [(b, k) for b, k in self.base.items() if k not in dead]
        out.extend(self.mem.items())
        return out

    def check(self):
        self.base.check()
        self.mem.check()


class IndexKind(enum.Enum):
    BTREE = "btree"
    RTREE = "rtree"


@dataclass(frozen=True)
class IndexDescriptor:
    name: str
    kind: IndexKind
    field: str


@dataclass
class DatasetDescriptor:
    name: str
    datatype: object
    primary_key: tuple
    indexes: list = field(default_factory=list)
    partition_count: int = 1
    placement: tuple = ()

    def __post_init__(self):
        self.primary_key = tuple(self.primary_key)
        if not self.placement:
            self.placement = tuple(range(self.partition_count))
        self.placement = tuple(self.placement)


def _materialize(value):
    return deserialize_record(value) if type(value) is bytes else value


class PartitionLog:
    """Append-only log: 4-byte big-endian length, 1-byte op tag, record bytes."""

    OPS = {"insert": 1, "upsert": 2}
    _LEN = struct.Struct(">I")

    def __init__(self, path):
        self.path = path
        self._fh = None

    def append(self, op, data):
        if self._fh is None:
            self._fh = open(self.path, "ab")
        self._fh.write(self._LEN.pack(len(data) + 1) + bytes((self.OPS[op],)) + data)
        self._fh.flush()

    def replay(self):
        if not os.path.exists(self.path):
            return
        names = {v: k for k, v in self.OPS.items()}
        with open(self.path, "rb") as fh:
            blob = fh.read()
        pos = 0
        while pos < len(blob):
            if pos + 4 > len(blob):
                raise CorruptRecord(f"truncated log entry in {self.path}")
            (n,) = self._LEN.unpack_from(blob, pos)
            pos += 4
            if n < 1 or pos + n > len(blob):
                raise CorruptRecord(f"truncated log entry in {self.path}")
            op = names.get(blob[pos])
            if op is None:
                raise CorruptRecord(f"unknown log op tag {blob[pos]}")
            yield op, blob[pos + 1:pos + n]
            pos += n

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class CommitCounter:
    """Global commit numbering shared by all partitions of a storage instance."""

    def __init__(self):
        self._it = itertools.count(1)
        self.last = 0

    def __next__(self):
        v = next(self._it)
        self.last = v
        return v

    def __iter__(self):
        return self


class PartitionStore:
    def __init__(self, descriptor, partition, commit_counter, log_path=None):
        self.descriptor = descriptor
        self.partition = partition
        self._commit = commit_counter
        self._lock = threading.RLock()
        self._base_keys = []
        self._base = {}
        self._mem = SortedDict()
        self._mem_version = 0
        self.commit_seq = 0
        self.approx_bytes = 0
        self._btrees = {}
        self._rtrees = {}
        self._log = PartitionLog(log_path) if log_path else None

    # -- sizing -----------------------------------------------------------------------
    def __len__(self):
        with self._lock:
            if not self._mem:
                return len(self._base)
            return len(self._base) + sum(1 for k in self._mem if k not in self._base)

    @property
    def mem_size(self):
        return len(self._mem)

    # -- writes -------------------------------------------------------------------------
    def _entry(self, key):
        e = self._mem.get(key)
        if e is None:
            e = self._base.get(key)
        return e

    def write(self, key, value, record, mode, size=None):
        """Store ``value`` (a record or its serialized bytes) under ``key``.

        ``record`` is the materialized record, needed only for index upkeep.
        Returns the global commit number.
        """
        with self._lock:
            old = self._entry(key)
            if old is not None and mode == "insert":
                raise DuplicateKey(f"{self.descriptor.name}: key already present")
            if self._btrees or self._rtrees:
                if record is None:
                    record = _materialize(value)
                old_rec = _materialize(old[0]) if old is not None else None
                self._reindex(key, old_rec, record)
            self.commit_seq += 1
            if key not in self._mem:
                self._mem_version += 1
            self._mem[key] = (value, self.commit_seq)
            if size is None:
                size = len(value) if type(value) is bytes else len(serialize_record(value))
            self.approx_bytes += size
            seq = next(self._commit)
            if self._log is not None:
                data = value if type(value) is bytes else serialize_record(value)
                self._log.append(mode, data)
            return seq

    def bulk_load(self, items):
        """Load (key, value, size) triples into an empty partition as its base."""
        with self._lock:
            if self._base or self._mem:
                raise CatalogError("bulk load needs an empty partition")
            items = sorted(items, key=lambda t: t[0])
            keys = []
            base = {}
            for key, value, size in items:
                if key in base:
                    raise DuplicateKey(f"{self.descriptor.name}: duplicate key in bulk load")
                self.commit_seq += 1
                base[key] = (value, self.commit_seq)
                keys.append(key)
                self.approx_bytes += size
                next(self._commit)
            self._base_keys = keys
            self._base = base
            for name in list(self._btrees):
                self._build_index(name)
            for name in list(self._rtrees):
                self._build_index(name)
            if self._log is not None:
                for _, value, _ in items:
                    data = value if type(value) is bytes else serialize_record(value)
                    self._log.append("insert", data)

    # -- reads --------------------------------------------------------------------------
    def get(self, key):
        e = self._mem.get(key)
        if e is None:
            e = self._base.get(key)
            if e is None:
                return None
        return _materialize(e[0])

    def get_versioned(self, key):
        e = self._entry(key)
        return None if e is None else (_materialize(e[0]), e[1])

    def scan(self):
        """Records in key order; each is the latest version when reached."""
        base_keys = self._base_keys
        base = self._base
        mem = self._mem
        if not mem:
            v0 = self._mem_version
            for i, k in enumerate(base_keys):
                if self._mem_version != v0:
                    last = base_keys[i - 1] if i else None
                    yield from self._merge_scan(last, i)
                    return
                e = mem.get(k) if mem else None
                if e is None:
                    e = base[k]
                yield _materialize(e[0])
            if self._mem_version != v0:
                last = base_keys[-1] if base_keys else None
                yield from self._merge_scan(last, len(base_keys))
            return
        yield from self._merge_scan(None, 0)

    def _merge_scan(self, last, bi):
        base_keys = self._base_keys
        base = self._base
        mem = self._mem
        nb = len(base_keys)
        while True:
            with self._lock:
                version = self._mem_version
                if last is None:
                    it = mem.irange()
                else:
                    it = mem.irange(minimum=last, inclusive=(False, True))
                chunk = list(islice(it, _MERGE_CHUNK))
            limit = chunk[-1] if len(chunk) == _MERGE_CHUNK else None
            if last is not None:
                bi = bisect.bisect_right(base_keys, last, bi)
            mi = 0
            restart = False
            while True:
                bk = base_keys[bi] if bi < nb else None
                mk = chunk[mi] if mi < len(chunk) else None
                if bk is not None and limit is not None and bk > limit:
                    bk = None
                if bk is None and mk is None:
                    break
                if mk is None or (bk is not None and bk < mk):
                    k = bk
                    bi += 1
                elif bk is None or mk < bk:
                    k = mk
                    mi += 1
                else:
                    k = bk
                    bi += 1
                    mi += 1
                e = mem.get(k)
                if e is None:
                    e = base.get(k)
                if e is not None:
                    yield _materialize(e[0])
                last = k
                if self._mem_version != version:
                    restart = True
                    break
            if restart:
                continue
            if limit is None:
                return

    def keys(self):
        with self._lock:
            if not self._mem:
                return list(self._base_keys)
            return sorted(set(self._base_keys) | set(self._mem.keys()))

    # -- indexes ------------------------------------------------------------------------
    def add_index(self, desc):
        with self._lock:
            if desc.kind is IndexKind.BTREE:
                self._btrees[desc.name] = _BTreeIndex(desc)
            else:
                self._rtrees[desc.name] = _RTreeIndex(desc)
            self._build_index(desc.name)

    def _all_entries(self):
        for k in self.keys():
            e = self._entry(k)
            yield k, _materialize(e[0])

    def _build_index(self, name):
        if name in self._btrees:
            desc = self._btrees[name].desc
            entries = []
            for k, rec in self._all_entries():
                ik = _btree_key(rec, desc.field)
                if ik is not None:
                    entries.append((ik, k))
            self._btrees[name] = _BTreeIndex(desc, entries)
        else:
            desc = self._rtrees[name].desc
            items = []
            for k, rec in self._all_entries():
                box = _rtree_box(rec, desc.field)
                if box is not None:
                    items.append((box, k))
            self._rtrees[name] = _RTreeIndex(desc, items)

    def _reindex(self, key, old, new):
        for idx in self._btrees.values():
            f = idx.desc.field
            ok = _btree_key(old, f) if old is not None else None
            nk = _btree_key(new, f)
            if ok != nk:
                idx.apply(key, ok, nk)
        for idx in self._rtrees.values():
            f = idx.desc.field
            ob = _rtree_box(old, f) if old is not None else None
            nb = _rtree_box(new, f)
            if ob != nb:
                idx.apply(key, ob, nb)

    def btree_range(self, name, lo, hi, lo_inclusive=True, hi_inclusive=True):
        with self._lock:
            try:
                idx = self._btrees[name]
            except KeyError:
                raise UnknownIndex(f"no B-tree index {name!r} on {self.descriptor.name}") from None
            desc = idx.desc
            elo = encode_key_value(lo) if lo is not None else None
            ehi = encode_key_value(hi) if hi is not None else None
            pks = []
            for ik, pk in idx.irange(elo):
                if elo is not None and not lo_inclusive and ik == elo:
                    continue
                if ehi is not None and (ik > ehi or (not hi_inclusive and ik == ehi)):
                    break
                pks.append(pk)
        out = []
        for pk in pks:
            rec = self.get(pk)
            if rec is None:
                continue
            ik = _btree_key(rec, desc.field)
            if ik is None:
                continue
            if elo is not None and (ik < elo or (not lo_inclusive and ik == elo)):
                continue
            if ehi is not None and (ik > ehi or (not hi_inclusive and ik == ehi)):
                continue
            out.append(rec)
        return out

    def rtree_search(self, name, box):
        """Records whose indexed point lies in ``box`` (box filter only)."""
        with self._lock:
            try:
                idx = self._rtrees[name]
            except KeyError:
                raise UnknownIndex(f"no R-tree index {name!r} on {self.descriptor.name}") from None
            desc = idx.desc
            pks = idx.search(box)
        out = []
        x1, y1, x2, y2 = box
        for pk in pks:
            rec = self.get(pk)
            if rec is None:
                continue
            p = get_path(rec, desc.field.split("."))
            if type(p) is Point and x1 <= p.x <= x2 and y1 <= p.y <= y2:
                out.append(rec)
        return out

    def has_index(self, name):
        return name in self._btrees or name in self._rtrees

    def check_indexes(self):
        """Index entries mirror stored records exactly (used by tests)."""
        with self._lock:
            recs = dict(self._all_entries())
            for idx in self._btrees.values():
                want = sorted((ik, k) for k, r in recs.items()
                              if (ik := _btree_key(r, idx.desc.field)) is not None)
                if idx.entries() != want:
                    return False
            for idx in self._rtrees.values():
                want = sorted((b, k) for k, r in recs.items()
                              if (b := _rtree_box(r, idx.desc.field)) is not None)
                if sorted(idx.items()) != want:
                    return False
                idx.check()
            return True

    def replay_log(self, dataset):
        if self._log is None:
            return 0
        n = 0
        entries = list(self._log.replay())
        log, self._log = self._log, None
        try:
            for op, data in entries:
                rec = deserialize_record(data)
                key = extract_primary_key(rec, self.descriptor.primary_key)
                self.write(key, rec, rec, "upsert" if op == "upsert" else "insert")
                n += 1
        finally:
            self._log = log
        return n

    def close(self):
        if self._log is not None:
            self._log.close()


def _btree_key(rec, fieldname):
    v = get_path(rec, fieldname.split("."))
    if v is MISSING or v is None:
        return None
    try:
        return encode_key_value(v)
    except ArgumentTypeError:
        return None


def _rtree_box(rec, fieldname):
    v = get_path(rec, fieldname.split("."))
    if type(v) is Point:
        return (v.x, v.y, v.x, v.y)
    return None


class Dataset:
    def __init__(self, descriptor, commit_counter, log_dir=None):
        self.descriptor = descriptor
        self.name = descriptor.name
        self.key_fields = descriptor.primary_key
        self._commit = commit_counter
        self.partitions = []
        for p in range(descriptor.partition_count):
            path = os.path.join(log_dir, f"{descriptor.name}.p{p}.log") if log_dir else None
            self.partitions.append(PartitionStore(descriptor, p, commit_counter, path))

    @property
    def partition_count(self):
        return len(self.partitions)

    def key_of(self, record):
        return extract_primary_key(record, self.key_fields)

    def partition_for(self, key):
        return partition_of(key, len(self.partitions))

    def _encode_key(self, key):
        if type(key) is bytes:
            return key
        if isinstance(key, (tuple, list)):
            return b"".join(encode_key_value(v) for v in key)
        return encode_key_value(key)

    # -- writes -------------------------------------------------------------------------
    def insert(self, record):
        return self._write(record, "insert")

    def upsert(self, record):
        return self._write(record, "upsert")

    def _write(self, record, mode):
        validate(record, self.descriptor.datatype)
        key = self.key_of(record)
        return self.partitions[self.partition_for(key)].write(key, record, record, mode)

    def write_serialized(self, key, data, mode="insert", partition=None):
        """Store pre-validated serialized record bytes under a known key."""
        p = self.partition_for(key) if partition is None else partition
        return self.partitions[p].write(key, data, None, mode, len(data))

    def bulk_load(self, records):
        by_part = [[] for _ in self.partitions]
        for r in records:
            validate(r, self.descriptor.datatype)
            key = self.key_of(r)
            by_part[self.partition_for(key)].append((key, r, len(serialize_record(r))))
        for part, items in zip(self.partitions, by_part):
            part.bulk_load(items)

    # -- reads --------------------------------------------------------------------------
    def read_by_key(self, key):
        k = self._encode_key(key)
        return self.partitions[self.partition_for(k)].get(k)

    def scan(self):
        for part in self.partitions:
            yield from part.scan()

    def scan_partition(self, p):
        return self.partitions[p].scan()

    def count(self):
        return sum(len(p) for p in self.partitions)

    @property
    def approx_bytes(self):
        return sum(p.approx_bytes for p in self.partitions)

    @property
    def has_pending_writes(self):
        return any(p.mem_size for p in self.partitions)

    def index(self, name):
        for d in self.descriptor.indexes:
            if d.name == name:
                return d
        raise UnknownIndex(f"no index {name!r} on {self.name}")

    def index_on(self, fieldname, kind):
        for d in self.descriptor.indexes:
            if d.field == fieldname and d.kind is kind:
                return d
        return None

    def index_lookup(self, name, lo, hi=None, lo_inclusive=True, hi_inclusive=True):
        """Records whose indexed field lies in [lo, hi]; ``hi`` defaults to ``lo``."""
        desc = self.index(name)
        if desc.kind is not IndexKind.BTREE:
            raise UnknownIndex(f"index {name!r} is not a B-tree")
        if hi is None:
            hi = lo
        out = []
        for part in self.partitions:
            out.extend(part.btree_range(name, lo, hi, lo_inclusive, hi_inclusive))
        return out

    def index_lookup_circle(self, name, circle):
        desc = self.index(name)
        if desc.kind is not IndexKind.RTREE:
            raise UnknownIndex(f"index {name!r} is not an R-tree")
        if type(circle) is not Circle:
            raise ArgumentTypeError("circle probe needs a circle")
        box = bounding_box(circle)
        path = desc.field.split(".")
        out = []
        for part in self.partitions:
            for rec in part.rtree_search(name, box):
                if point_in_circle(get_path(rec, path), circle):
                    out.append(rec)
        return out

    def index_lookup_box(self, name, box):
        """Records whose indexed point lies in ``box`` (a Rectangle or an
        ``(xmin, ymin, xmax, ymax)`` tuple)."""
        self.index(name)
        if type(box) is Rectangle:
            box = bounding_box(box)
        out = []
        for part in self.partitions:
            out.extend(part.rtree_search(name, box))
        return out

    def add_index(self, desc):
        if any(d.name == desc.name for d in self.descriptor.indexes):
            raise CatalogError(f"index {desc.name!r} already exists on {self.name}")
        dt = self.descriptor.datatype
        f = dt.field(desc.field) if dt is not None else None
        if f is not None:
            if desc.kind is IndexKind.RTREE and f.kind != "point":
                raise CatalogError(f"R-tree index needs a point field; {desc.field} is {f.kind}")
            if desc.kind is IndexKind.BTREE and f.kind not in ("int64", "double", "string",
                                                              "boolean", "datetime"):
                raise CatalogError(f"B-tree index needs a scalar field; {desc.field} is {f.kind}")
        self.descriptor.indexes.append(desc)
        for part in self.partitions:
            part.add_index(desc)

    def check_indexes(self):
        return all(p.check_indexes() for p in self.partitions)

    def close(self):
        for p in self.partitions:
            p.close()


class Storage:
    """Catalog of datasets for one cluster."""

    def __init__(self, nodes=1, log_dir=None):
        self.nodes = nodes
        self.log_dir = log_dir
        self._datasets = {}
        self._lock = threading.Lock()
        self._commit = CommitCounter()

    def last_commit(self):
        return self._commit.last

    def create_dataset(self, name, datatype, primary_key, partitions=None, if_not_exists=False):
        primary_key = tuple(primary_key)
        if not primary_key:
            raise CatalogError("a dataset needs a primary key")
        for f in primary_key:
            spec = datatype.field(f)
            if spec is None or spec.optional:
                raise CatalogError(f"primary key field {f!r} must be a required field of "
                                   f"{datatype.name}")
        with self._lock:
            if name in self._datasets:
                if if_not_exists:
                    return self._datasets[name]
                raise CatalogError(f"dataset {name!r} already exists")
            n = partitions or self.nodes
            desc = DatasetDescriptor(name, datatype, primary_key, [], n,
                                     tuple(i % self.nodes for i in range(n)))
            ds = Dataset(desc, self._commit, self.log_dir)
            self._datasets[name] = ds
        if self.log_dir:
            for part in ds.partitions:
                part.replay_log(ds)
        return ds

    def dataset(self, name):
        try:
            return self._datasets[name]
        except KeyError:
            raise UnknownDataset(f"unknown dataset {name!r}") from None

    def has_dataset(self, name):
        return name in self._datasets

    def datasets(self):
        return list(self._datasets)

    def create_index(self, dataset, name, kind, fieldname):
        ds = self.dataset(dataset)
        desc = IndexDescriptor(name, kind, fieldname)
        ds.add_index(desc)
        return desc

    def drop_dataset(self, name):
        with self._lock:
            ds = self._datasets.pop(name, None)
        if ds is None:
            raise UnknownDataset(f"unknown dataset {name!r}")
        ds.close()

    def close(self):
        for ds in self._datasets.values():
            ds.close()
