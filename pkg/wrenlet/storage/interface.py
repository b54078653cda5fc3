"""
The object store as seen by workers and the driver: a backend plus shaping.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional

from wrenlet.storage.base import MemoryBackend, ObjectBackend, ObjectRecord
from wrenlet.storage.shaping import (
    Clock,
    ClientLink,
    SharedResource,
    ShapingProfile,
    WallClock,
)
from wrenlet.types import KeyLike, ObjectKey

logger = logging.getLogger(__name__)


class ObjectStore:
    """
    Whole-object storage with read-your-writes visibility. Every call may be
    given the ClientLink of the caller; its duration is then charged to that
    link and shaped by the profile (per-client bandwidth, a sampled per-op
    latency, and the aggregate bandwidth cap shared by all clients).
    """

    def __init__(
        self,
        backend: Optional[ObjectBackend] = None,
        clock: Optional[Clock] = None,
        shaping: Optional[ShapingProfile] = None,
        seed: int = 0,
    ):
        self.backend = backend or MemoryBackend()
        self.clock = clock or WallClock()
        self.shaping = shaping or ShapingProfile.unshaped()
        self.aggregate = SharedResource(self.shaping.aggregate_bw_cap)
        self.default_link = ClientLink("client", seed)

    def _link(self, link: Optional[ClientLink]) -> ClientLink:
        link = link or self.default_link
        link.check()
        return link

    def _shape(self, link: ClientLink, label: str, size: int, bandwidth: float) -> None:
        if not self.shaping.object_shaped:
            return
        start = self.clock.now()
        moment = start + self.shaping.op_latency.sample(link.rng)
        remaining = size
        if math.isinf(self.aggregate.rate):
            moment += remaining / bandwidth
            remaining = 0
        while remaining > 0:
            # Part-wise reservations let concurrent clients share the cap.
            part = min(remaining, self.shaping.transfer_part)
            self.clock.sleep_until(moment)
            moment = max(moment + part / bandwidth, self.aggregate.reserve(moment, part))
            remaining -= part
        self.clock.sleep_until(moment)
        link.charge(label, moment - start)

    def object_put(
        self, key: KeyLike, payload: bytes, link: Optional[ClientLink] = None
    ) -> None:
        """Atomically stores `payload` at `key` (last writer wins)"""
        object_key = ObjectKey.of(key)
        link = self._link(link)
        self._shape(link, "write", len(payload), self.shaping.per_client_write_bw)
        with link.committing():
            self.backend.put(
                ObjectRecord(object_key, bytes(payload), self.clock.now(), link.name)
            )
        link.bytes_written += len(payload)
        logger.debug(f"{link.name} put {object_key} ({len(payload)} bytes)")

    def object_put_if_absent(
        self, key: KeyLike, payload: bytes, link: Optional[ClientLink] = None
    ) -> bool:
        """Stores `payload` only if nothing is stored at `key`; returns whether it did"""
        object_key = ObjectKey.of(key)
        link = self._link(link)
        self._shape(link, "write", len(payload), self.shaping.per_client_write_bw)
        record = ObjectRecord(object_key, bytes(payload), self.clock.now(), link.name)
        with link.committing():
            stored = self.backend.put_if_absent(record)
        if stored:
            link.bytes_written += len(payload)
        logger.debug(f"{link.name} put_if_absent {object_key}: stored={stored}")
        return stored

    def object_get(self, key: KeyLike, link: Optional[ClientLink] = None) -> bytes:
        """Payload of the latest completed put at `key`, or NotFound"""
        object_key = ObjectKey.of(key)
        link = self._link(link)
        payload = self.backend.get(object_key).payload
        self._shape(link, "read", len(payload), self.shaping.per_client_read_bw)
        link.bytes_read += len(payload)
        return payload

    def object_exists(self, key: KeyLike, link: Optional[ClientLink] = None) -> bool:
        """True iff a completed put is visible at `key`"""
        object_key = ObjectKey.of(key)
        link = self._link(link)
        self._shape(link, "read", 0, self.shaping.per_client_read_bw)
        return self.backend.exists(object_key)

    def object_list(self, prefix: str = "", link: Optional[ClientLink] = None) -> List[ObjectKey]:
        """Sorted keys starting with `prefix`, as of the start of the call"""
        link = self._link(link)
        keys = self.backend.list(prefix)
        self._shape(link, "read", 0, self.shaping.per_client_read_bw)
        return keys

    def object_delete(self, key: KeyLike, link: Optional[ClientLink] = None) -> bool:
        """Removes `key`; returns whether an object was there"""
        object_key = ObjectKey.of(key)
        link = self._link(link)
        self._shape(link, "write", 0, self.shaping.per_client_write_bw)
        return self.backend.delete(object_key)

    def delete_prefix(self, prefix: str, link: Optional[ClientLink] = None) -> int:
        """Bulk delete of every key under `prefix`; returns how many were removed"""
        if not prefix:
            raise ValueError("refusing to delete the whole store")
        link = self._link(link)
        keys = self.backend.list(prefix)
        self._shape(link, "write", 0, self.shaping.per_client_write_bw)
        deleted = sum(1 for key in keys if self.backend.delete(key))
        logger.info(f"deleted {deleted} objects under {prefix}")
        return deleted
