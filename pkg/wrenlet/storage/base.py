"""Object storage backends: whole-object atomic storage, in memory or on disk"""
from __future__ import annotations

import logging
import os
import threading
import time
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from wrenlet.models import CapacityExceeded, NotFound
from wrenlet.types import ObjectKey

logger = logging.getLogger(__name__)

TMP_DIR = ".tmp"
DIR_SUFFIX = ".d"
OBJECT_SUFFIX = ".obj"


@dataclass
class ObjectRecord:
    """One stored object. Reads always return the payload of exactly one write."""

    key: ObjectKey
    payload: bytes
    created_at: float = field(default_factory=time.monotonic)
    writer_id: str = ""

    @property
    def size(self) -> int:
        """Payload length in bytes"""
        return len(self.payload)


class ObjectBackend(ABC):
    """Interface for atomic put / get / exists / list / delete of whole objects"""

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self._used = 0
        self._lock = threading.RLock()

    def _charge_capacity(self, added: int, removed: int) -> None:
        # Caller holds self._lock.
        used = self._used + added - removed
        if self.capacity is not None and used > self.capacity:
            raise CapacityExceeded(
                f"backend holds {self._used} of {self.capacity} bytes, "
                f"cannot add {added - removed} more"
            )
        self._used = used

    @property
    def used_bytes(self) -> int:
        """Bytes currently stored"""
        return self._used

    @abstractmethod
    def put(self, record: ObjectRecord) -> None:
        """Stores `record`, replacing any previous object at its key"""

    @abstractmethod
    def put_if_absent(self, record: ObjectRecord) -> bool:
        """Stores `record` only if its key is absent; returns whether it was stored"""

    @abstractmethod
    def get(self, key: ObjectKey) -> ObjectRecord:
        """Returns the object at `key` or raises NotFound"""

    @abstractmethod
    def exists(self, key: ObjectKey) -> bool:
        """True iff an object is stored at `key`"""

    @abstractmethod
    def list(self, prefix: str) -> List[ObjectKey]:
        """Keys whose text form starts with `prefix`, sorted"""

    @abstractmethod
    def delete(self, key: ObjectKey) -> bool:
        """Removes the object at `key`; returns whether there was one"""


class MemoryBackend(ObjectBackend):
    """Objects kept in a dictionary; lost with the process"""

    def __init__(self, capacity: Optional[int] = None):
        super().__init__(capacity)
        self._objects: Dict[str, ObjectRecord] = {}

    def put(self, record: ObjectRecord) -> None:
        text = str(record.key)
        with self._lock:
            previous = self._objects.get(text)
            self._charge_capacity(record.size, previous.size if previous else 0)
            self._objects[text] = record

    def put_if_absent(self, record: ObjectRecord) -> bool:
        text = str(record.key)
        with self._lock:
            if text in self._objects:
                return False
            self._charge_capacity(record.size, 0)
            self._objects[text] = record
            return True

    def get(self, key: ObjectKey) -> ObjectRecord:
        with self._lock:
            record = self._objects.get(str(key))
        if record is None:
            raise NotFound(f"no object at {key}")
        return record

    def exists(self, key: ObjectKey) -> bool:
        with self._lock:
            return str(key) in self._objects

    def list(self, prefix: str) -> List[ObjectKey]:
        with self._lock:
            names = [name for name in self._objects if name.startswith(prefix)]
        return [ObjectKey.parse(name) for name in sorted(names)]

    def delete(self, key: ObjectKey) -> bool:
        with self._lock:
            record = self._objects.pop(str(key), None)
            if record is None:
                return False
            self._used -= record.size
            return True


class FilesystemBackend(ObjectBackend):
    """
    One file per object under <root>. Every key segment but the last names a
    directory with a ".d" suffix and the last names a file with an ".obj"
    suffix, so a key never collides with the directory of a longer key.
    Writes go to <root>/.tmp/ first and are published with an atomic rename
    (or a hard link for create-if-absent), so readers never see partial
    files. Deletes prune directories left empty.
    """

    def __init__(self, root: Path | str, capacity: Optional[int] = None):
        super().__init__(capacity)
        self.root = Path(root)
        self.tmp = self.root / TMP_DIR
        if not self.tmp.exists():
            logger.info(f"creating object store root {self.root}")
        self.tmp.mkdir(parents=True, exist_ok=True)
        self._used = sum(p.stat().st_size for p in self._files())

    def _path(self, key: ObjectKey) -> Path:
        *directories, name = str(key).split("/")
        return self.root.joinpath(*[d + DIR_SUFFIX for d in directories], name + OBJECT_SUFFIX)

    def _key_text(self, path: Path) -> str:
        *directories, name = path.relative_to(self.root).parts
        segments = [d[: -len(DIR_SUFFIX)] for d in directories]
        return "/".join(segments + [name[: -len(OBJECT_SUFFIX)]])

    def _files(self) -> List[Path]:
        files = []
        for directory, dirnames, filenames in os.walk(self.root):
            if Path(directory) == self.root and TMP_DIR in dirnames:
                dirnames.remove(TMP_DIR)
            files.extend(
                Path(directory) / name for name in filenames if name.endswith(OBJECT_SUFFIX)
            )
        return files

    def _stage(self, record: ObjectRecord) -> Path:
        staged = self.tmp / uuid.uuid4().hex
        with open(staged, "wb") as out_file:
            out_file.write(record.payload)
        return staged

    def _size(self, path: Path) -> int:
        try:
            return path.stat().st_size
        except FileNotFoundError:
            return 0

    def _prune(self, directory: Path) -> None:
        # Caller holds self._lock.
        while directory != self.root:
            try:
                directory.rmdir()
            except OSError:
                return
            directory = directory.parent

    def put(self, record: ObjectRecord) -> None:
        path = self._path(record.key)
        staged = self._stage(record)
        try:
            with self._lock:
                path.parent.mkdir(parents=True, exist_ok=True)
                self._charge_capacity(record.size, self._size(path))
                os.replace(staged, path)
        finally:
            if staged.exists():
                staged.unlink()

    def put_if_absent(self, record: ObjectRecord) -> bool:
        path = self._path(record.key)
        staged = self._stage(record)
        try:
            with self._lock:
                if path.exists():
                    return False
                path.parent.mkdir(parents=True, exist_ok=True)
                self._charge_capacity(record.size, 0)
                try:
                    os.link(staged, path)
                except FileExistsError:
                    self._used -= record.size
                    return False
                return True
        finally:
            staged.unlink()

    def get(self, key: ObjectKey) -> ObjectRecord:
        path = self._path(key)
        try:
            with open(path, "rb") as in_file:
                payload = in_file.read()
            created_at = path.stat().st_mtime
        except FileNotFoundError as err:
            raise NotFound(f"no object at {key}") from err
        return ObjectRecord(key=key, payload=payload, created_at=created_at)

    def exists(self, key: ObjectKey) -> bool:
        return self._path(key).is_file()

    def list(self, prefix: str) -> List[ObjectKey]:
        names = [self._key_text(path) for path in self._files()]
        return [ObjectKey.parse(name) for name in sorted(names) if name.startswith(prefix)]

    def delete(self, key: ObjectKey) -> bool:
        path = self._path(key)
        with self._lock:
            size = self._size(path)
            try:
                path.unlink()
            except FileNotFoundError:
                return False
            self._used -= size
            self._prune(path.parent)
            return True
