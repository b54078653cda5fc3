"""Sharded key-value store with atomic counters and compare-and-swap"""
from __future__ import annotations

import logging
import threading
from typing import Any, Dict, List, Optional
from urllib.parse import quote

from wrenlet.models import NotAnInteger, NotFound, ValueTooLarge
from wrenlet.storage.base import MemoryBackend, ObjectBackend, ObjectRecord
from wrenlet.storage.shaping import (
    Clock,
    ClientLink,
    IntervalSet,
    SharedResource,
    ShapingProfile,
    WallClock,
)
from wrenlet.types import ObjectKey
from wrenlet.util import stable_hash

logger = logging.getLogger(__name__)

DEFAULT_VALUE_CAP = 512 * 1024
KV_NAMESPACE = "kv"


class KvShardMap:
    """Assigns keys to shards by a process-independent hash"""

    def __init__(self, shard_count: int):
        if shard_count < 1:
            raise ValueError(f"shard_count must be positive, got {shard_count}")
        self.shard_count = shard_count

    def shard_of(self, key: str) -> int:
        """Shard index of `key`"""
        return stable_hash(key) % self.shard_count


# pylint: disable=too-many-instance-attributes
class KvStore:
    """
    Low-latency store for small values, split over `shards` shards.
    Operations are linearizable per key. Under shaping, each call costs
    the client 1/kv_ops_per_client_per_sec plus size/kv_client_bw, and
    queues on its shard for 1/kv_shard_ops_per_sec plus size/kv_shard_bw;
    it completes when both are done.
    """

    def __init__(
        self,
        shards: int = 1,
        backend: Optional[ObjectBackend] = None,
        clock: Optional[Clock] = None,
        shaping: Optional[ShapingProfile] = None,
        value_cap: int = DEFAULT_VALUE_CAP,
        seed: int = 0,
    ):
        self.shard_map = KvShardMap(shards)
        self.backend = backend or MemoryBackend()
        self.clock = clock or WallClock()
        self.shaping = shaping or ShapingProfile.unshaped()
        self.value_cap = value_cap
        self.default_link = ClientLink("client", seed)
        self._locks = [threading.Lock() for _ in range(shards)]
        self._queues = [SharedResource(1.0) for _ in range(shards)]
        self.activity = IntervalSet()

    @property
    def shards(self) -> int:
        """Number of shards"""
        return self.shard_map.shard_count

    def _key(self, shard: int, key: str) -> ObjectKey:
        return ObjectKey(KV_NAMESPACE, f"{shard}/k{quote(key, safe='')}")

    def _check_size(self, key: str, value: bytes) -> None:
        if len(value) > self.value_cap:
            raise ValueTooLarge(
                f"value for {key!r} is {len(value)} bytes, cap is {self.value_cap}"
            )

    def _read(self, shard: int, key: str) -> Optional[bytes]:
        try:
            return self.backend.get(self._key(shard, key)).payload
        except NotFound:
            return None

    def _write(self, shard: int, key: str, value: bytes, link: ClientLink) -> None:
        record = ObjectRecord(self._key(shard, key), bytes(value), self.clock.now(), link.name)
        self.backend.put(record)

    def _shape(self, link: ClientLink, shard: int, size: int) -> None:
        start = self.clock.now()
        if not self.shaping.kv_shaped:
            self.activity.add(start, start)
            return
        client_done = (
            start
            + 1.0 / self.shaping.kv_ops_per_client_per_sec
            + size / self.shaping.kv_client_bw
        )
        service = 1.0 / self.shaping.kv_shard_ops_per_sec + size / self.shaping.kv_shard_bw
        done = max(client_done, self._queues[shard].reserve(start, service))
        self.activity.add(start, done)
        self.clock.sleep_until(done)
        link.charge("kv", done - start)

    def _begin(self, key: str, link: Optional[ClientLink]) -> tuple[int, ClientLink]:
        link = link or self.default_link
        link.check()
        return self.shard_map.shard_of(key), link

    def kv_put(self, key: str, value: bytes, link: Optional[ClientLink] = None) -> None:
        """Stores `value` at `key`"""
        self._check_size(key, value)
        shard, link = self._begin(key, link)
        with self._locks[shard]:
            self._write(shard, key, value, link)
        link.bytes_written += len(value)
        self._shape(link, shard, len(value))

    def kv_get(self, key: str, link: Optional[ClientLink] = None) -> bytes:
        """Value at `key`, or NotFound"""
        shard, link = self._begin(key, link)
        with self._locks[shard]:
            value = self._read(shard, key)
        self._shape(link, shard, len(value or b""))
        if value is None:
            raise NotFound(f"no value at kv key {key!r}")
        link.bytes_read += len(value)
        return value

    def kv_add(self, key: str, delta: int, link: Optional[ClientLink] = None) -> int:
        """Atomically adds `delta` to the decimal integer at `key` (absent is 0)"""
        shard, link = self._begin(key, link)
        with self._locks[shard]:
            current = self._read(shard, key)
            try:
                value = int(current.decode("ascii")) if current is not None else 0
            except (UnicodeDecodeError, ValueError) as err:
                raise NotAnInteger(f"kv key {key!r} holds {current!r}") from err
            value += delta
            encoded = str(value).encode("ascii")
            self._check_size(key, encoded)
            self._write(shard, key, encoded, link)
        self._shape(link, shard, len(encoded))
        return value

    def kv_cas(
        self,
        key: str,
        expected: Optional[bytes],
        new: bytes,
        link: Optional[ClientLink] = None,
    ) -> bool:
        """Installs `new` iff the value at `key` equals `expected` (None = absent)"""
        self._check_size(key, new)
        shard, link = self._begin(key, link)
        with self._locks[shard]:
            won = self._read(shard, key) == expected
            if won:
                self._write(shard, key, new, link)
        if won:
            link.bytes_written += len(new)
        self._shape(link, shard, len(new))
        return won

    def kv_delete(self, key: str, link: Optional[ClientLink] = None) -> bool:
        """Removes `key`; returns whether it was present"""
        shard, link = self._begin(key, link)
        with self._locks[shard]:
            removed = self.backend.delete(self._key(shard, key))
        self._shape(link, shard, 0)
        return removed

    def activity_record(self) -> Dict[str, Any]:
        """Trace record of the periods during which any KV operation was outstanding"""
        intervals: List[List[float]] = [[start, end] for start, end in self.activity.intervals()]
        return {"kind": "kv_activity", "shards": self.shards, "intervals": intervals}
