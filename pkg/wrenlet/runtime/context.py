"""
What a running function sees: its scratch space, storage handles bound to
its own client link, and a few time helpers.
"""
from __future__ import annotations

import logging
import shutil
import tempfile
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from wrenlet.models import MemoryLimitExceeded, ScratchLimitExceeded, TimeLimitExceeded
from wrenlet.runtime.limits import ResourceLimits
from wrenlet.storage.interface import ObjectStore
from wrenlet.storage.kv import KvStore
from wrenlet.storage.shaping import Clock, ClientLink
from wrenlet.types import KeyLike, ObjectKey

logger = logging.getLogger(__name__)


class Scratch:
    """
    Private local storage and memory accounting of one invocation.
    The directory is created empty and removed when the invocation ends.
    """

    def __init__(self, limits: ResourceLimits, root: Optional[Path] = None):
        self.limits = limits
        self.directory = Path(tempfile.mkdtemp(prefix="wrenlet-", dir=root))
        self.memory_in_use = 0
        self.peak_memory = 0
        self.scratch_in_use = 0
        self._lock = threading.Lock()

    def allocate(self, nbytes: int) -> None:
        """Accounts `nbytes` of memory; raises MemoryLimitExceeded past max_memory"""
        with self._lock:
            if self.memory_in_use + nbytes > self.limits.max_memory:
                raise MemoryLimitExceeded(
                    f"allocating {nbytes} bytes on top of {self.memory_in_use} "
                    f"exceeds {self.limits.max_memory}"
                )
            self.memory_in_use += nbytes
            self.peak_memory = max(self.peak_memory, self.memory_in_use)

    def release(self, nbytes: int) -> None:
        """Returns `nbytes` of accounted memory"""
        with self._lock:
            self.memory_in_use = max(0, self.memory_in_use - nbytes)

    def _path(self, name: str) -> Path:
        path = (self.directory / name).resolve()
        if self.directory.resolve() not in path.parents:
            raise ValueError(f"scratch file {name!r} escapes the scratch directory")
        return path

    def write(self, name: str, data: bytes) -> Path:
        """Writes scratch file `name`; raises ScratchLimitExceeded past max_scratch"""
        path = self._path(name)
        previous = path.stat().st_size if path.exists() else 0
        with self._lock:
            used = self.scratch_in_use - previous + len(data)
            if used > self.limits.max_scratch:
                raise ScratchLimitExceeded(
                    f"writing {name} ({len(data)} bytes) exceeds {self.limits.max_scratch}"
                )
            self.scratch_in_use = used
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return path

    def read(self, name: str) -> bytes:
        """Contents of scratch file `name`"""
        return self._path(name).read_bytes()

    def exists(self, name: str) -> bool:
        """True iff this invocation wrote scratch file `name`"""
        return self._path(name).is_file()

    def listdir(self) -> List[str]:
        """Names of the files in scratch space"""
        return sorted(
            p.relative_to(self.directory).as_posix()
            for p in self.directory.rglob("*")
            if p.is_file()
        )

    def destroy(self) -> None:
        """Removes the scratch directory"""
        shutil.rmtree(self.directory, ignore_errors=True)


class ObjectHandle:
    """Object store operations performed as the calling invocation"""

    def __init__(self, store: ObjectStore, link: ClientLink):
        self._store = store
        self._link = link

    def get(self, key: KeyLike) -> bytes:
        """See ObjectStore.object_get"""
        return self._store.object_get(key, self._link)

    def put(self, key: KeyLike, payload: bytes) -> None:
        """See ObjectStore.object_put"""
        self._store.object_put(key, payload, self._link)

    def exists(self, key: KeyLike) -> bool:
        """See ObjectStore.object_exists"""
        return self._store.object_exists(key, self._link)

    def list(self, prefix: str = "") -> List[ObjectKey]:
        """See ObjectStore.object_list"""
        return self._store.object_list(prefix, self._link)

    def delete(self, key: KeyLike) -> bool:
        """See ObjectStore.object_delete"""
        return self._store.object_delete(key, self._link)


class KvHandle:
    """Key-value operations performed as the calling invocation"""

    def __init__(self, store: KvStore, link: ClientLink):
        self._store = store
        self._link = link

    @property
    def value_cap(self) -> int:
        """Largest storable value in bytes"""
        return self._store.value_cap

    def put(self, key: str, value: bytes) -> None:
        """See KvStore.kv_put"""
        self._store.kv_put(key, value, self._link)

    def get(self, key: str) -> bytes:
        """See KvStore.kv_get"""
        return self._store.kv_get(key, self._link)

    def add(self, key: str, delta: int) -> int:
        """See KvStore.kv_add"""
        return self._store.kv_add(key, delta, self._link)

    def cas(self, key: str, expected: Optional[bytes], new: bytes) -> bool:
        """See KvStore.kv_cas"""
        return self._store.kv_cas(key, expected, new, self._link)

    def delete(self, key: str) -> bool:
        """See KvStore.kv_delete"""
        return self._store.kv_delete(key, self._link)


# pylint: disable=too-many-instance-attributes,too-many-arguments
class InvocationContext:
    """Passed to every entry point as its second argument"""

    def __init__(
        self,
        function_id: str,
        task: int,
        attempt: int,
        clock: Clock,
        link: ClientLink,
        objects: ObjectStore,
        kv: KvStore,
        scratch: Scratch,
        deadline: float,
        rng: np.random.Generator,
        compute_flops: float,
    ):
        self.function_id = function_id
        self.task = task
        self.attempt = attempt
        self.clock = clock
        self.link = link
        self.objects = ObjectHandle(objects, link)
        self.kv = KvHandle(kv, link)
        self.scratch = scratch
        self.deadline = deadline
        self.rng = rng
        self.compute_flops = compute_flops

    def now(self) -> float:
        """Current time of the engine's clock"""
        return self.clock.now()

    def remaining(self) -> float:
        """Seconds left before the runtime limit"""
        return self.deadline - self.clock.now()

    def checkpoint(self) -> None:
        """Cancellation point: raises if the invocation has to stop"""
        self.link.check()

    def sleep(self, seconds: float) -> None:
        """Sleeps, but never past the deadline"""
        if self.clock.now() + seconds > self.deadline:
            self.clock.sleep_until(self.deadline)
            raise TimeLimitExceeded(f"{self.function_id} slept past its deadline")
        self.clock.sleep(seconds)
        self.checkpoint()

    def charge_compute(self, seconds: float) -> None:
        """Advances a virtual clock by modelled compute time; a no-op on real time"""
        if not self.clock.virtual or seconds <= 0:
            return
        self.sleep(seconds)
        self.link.charge("compute", seconds)

    def charge_flops(self, flops: float) -> None:
        """charge_compute for `flops` floating point operations"""
        self.charge_compute(flops / self.compute_flops)

    @contextmanager
    def timing(self, label: str) -> Iterator[None]:
        """Attributes everything that happens in the block to `label`"""
        with self.link.labelled(label):
            start = self.clock.now()
            inner = sum(self.link.timings.values())
            try:
                yield
            finally:
                charged = sum(self.link.timings.values()) - inner
                self.link.charge(label, max(0.0, self.clock.now() - start - charged))
