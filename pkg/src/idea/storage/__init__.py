from .rtree import RTree
from .store import (
    Dataset,
    DatasetDescriptor,
    IndexDescriptor,
    IndexKind,
    PartitionLog,
    PartitionStore,
    Storage,
)
