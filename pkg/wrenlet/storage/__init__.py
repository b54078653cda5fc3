"""Remote storage substrates: the object store and the sharded key-value store"""
from wrenlet.storage.base import FilesystemBackend, MemoryBackend, ObjectBackend, ObjectRecord
from wrenlet.storage.interface import ObjectStore
from wrenlet.storage.kv import KvShardMap, KvStore
from wrenlet.storage.shaping import (
    ClientLink,
    Clock,
    LatencyDistribution,
    ShapingProfile,
    VirtualClock,
    WallClock,
)

__all__ = [
    "ClientLink",
    "Clock",
    "FilesystemBackend",
    "KvShardMap",
    "KvStore",
    "LatencyDistribution",
    "MemoryBackend",
    "ObjectBackend",
    "ObjectRecord",
    "ObjectStore",
    "ShapingProfile",
    "VirtualClock",
    "WallClock",
]
