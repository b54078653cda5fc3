"""
Value types shared by the storage services, the runtime and the driver.
"""
from __future__ import annotations

from datetime import datetime
from typing import Any, Dict, Union

import numpy as np

from wrenlet.models import InvalidKey
from wrenlet.util import JOB_DATE_FORMAT

Record = Dict[str, Any]

RESERVED_NAMESPACES = (".tmp",)


class ObjectKey:
    """
    Key of an object in the object store: a namespace followed by a
    slash-separated path. Keys are validated upon creation
    (at most 1024 bytes, no empty, "." or ".." segments) and ordered
    lexicographically by their text form.
    """

    MAX_LENGTH = 1024

    def __init__(self, namespace: str, path: str):
        self.namespace = namespace
        self.path = path
        ObjectKey._validate(namespace, path)

    @classmethod
    def parse(cls, text: str) -> ObjectKey:
        """Constructs a key from its text form `<namespace>/<path>`"""
        namespace, sep, path = text.partition("/")
        if not sep:
            raise InvalidKey(f"key {text!r} has no path below its namespace")
        return cls(namespace, path)

    @classmethod
    def of(cls, key: KeyLike) -> ObjectKey:
        """Accepts either a key or its text form"""
        if isinstance(key, ObjectKey):
            return key
        return cls.parse(key)

    @staticmethod
    def _validate(namespace: str, path: str) -> None:
        text = f"{namespace}/{path}"
        if len(text.encode("utf-8")) > ObjectKey.MAX_LENGTH:
            raise InvalidKey(f"key longer than {ObjectKey.MAX_LENGTH} bytes: {text[:64]}...")
        if namespace in RESERVED_NAMESPACES:
            raise InvalidKey(f"namespace {namespace!r} is reserved")
        for segment in [namespace] + path.split("/"):
            if segment in ("", ".", ".."):
                raise InvalidKey(f"invalid segment {segment!r} in key {text!r}")
            if "\x00" in segment or "\\" in segment:
                raise InvalidKey(f"invalid character in key {text!r}")

    def child(self, *segments: object) -> ObjectKey:
        """Key below this one, e.g. `jobs/j1`.child("result", 0)"""
        extra = "/".join(str(s) for s in segments)
        return ObjectKey(self.namespace, f"{self.path}/{extra}")

    def __str__(self) -> str:
        return f"{self.namespace}/{self.path}"

    def __repr__(self) -> str:
        return f"ObjectKey({str(self)!r})"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ObjectKey):
            return str(self) == str(other)
        return False

    def __lt__(self, other: object) -> bool:
        if isinstance(other, ObjectKey):
            return str(self) < str(other)
        return NotImplemented

    def __hash__(self) -> int:
        return str(self).__hash__()


KeyLike = Union[ObjectKey, str]


class JobId:
    """
    Globally unique job identifier: a UTC timestamp plus a random suffix,
    e.g. `20170101T000000-3f9a1c0e`. Usable as a key segment.
    """

    def __init__(self, value: str):
        if not value or "/" in value or value in (".", ".."):
            raise InvalidKey(f"invalid job id {value!r}")
        self.value = value

    @classmethod
    def new(cls, moment: datetime, rng: np.random.Generator) -> JobId:
        """Timestamp of `moment` plus an 8 hex digit suffix drawn from `rng`"""
        suffix = int(rng.integers(0, 1 << 32))
        return cls(f"{moment.strftime(JOB_DATE_FORMAT)}-{suffix:08x}")

    def __str__(self) -> str:
        return self.value

    def __repr__(self) -> str:
        return f"JobId({self.value!r})"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, JobId):
            return self.value == other.value
        return False

    def __hash__(self) -> int:
        return self.value.__hash__()
