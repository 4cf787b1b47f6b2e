"""Data feeds: descriptors, adapters and the decoupled ingestion pipeline."""

from .adapters import FileReplay, LinesReplay, SocketListener
from .descriptor import (
    DEFAULT_BATCH_SIZE,
    FeedDescriptor,
    FeedModel,
    FeedState,
    FileSource,
    LinesSource,
    SocketSource,
    descriptor_from_options,
)
from .pipeline import FeedMetrics, FeedRuntime, StaticFeedRuntime

__all__ = [
    "DEFAULT_BATCH_SIZE",
    "FeedDescriptor",
    "FeedMetrics",
    "FeedModel",
    "FeedRuntime",
    "FeedState",
    "FileReplay",
    "FileSource",
    "LinesReplay",
    "LinesSource",
    "SocketListener",
    "SocketSource",
    "StaticFeedRuntime",
    "descriptor_from_options",
]
