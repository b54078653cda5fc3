"""
Naming and transport of the map x reduce intermediate fragments of a shuffle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List

from wrenlet.job import JOBS_NAMESPACE, job_prefix
from wrenlet.models import IntermediateTooLarge
from wrenlet.runtime.context import InvocationContext
from wrenlet.types import JobId, ObjectKey

logger = logging.getLogger(__name__)


class Medium(Enum):
    """Where intermediate fragments are kept"""

    OBJECT = "object"
    KV = "kv"


@dataclass(frozen=True)
class ShuffleLayout:
    """
    Fragment (m, r) is written by map task m for reduce task r at
    jobs/<job>/shuffle/<m>/<r>, in the object store or, under the same
    name, in the key-value store.
    """

    job: JobId
    map_tasks: int
    reduce_tasks: int
    medium: Medium = Medium.OBJECT

    def __post_init__(self) -> None:
        if self.map_tasks < 0 or self.reduce_tasks < 1:
            raise ValueError(f"invalid shuffle shape {self.map_tasks}x{self.reduce_tasks}")

    @property
    def prefix(self) -> str:
        """Text prefix of every fragment key"""
        return f"{job_prefix(self.job)}shuffle/"

    def key(self, m: int, r: int) -> ObjectKey:
        """Key of fragment (m, r)"""
        if not (0 <= m < self.map_tasks and 0 <= r < self.reduce_tasks):
            raise IndexError(f"fragment ({m}, {r}) outside {self.map_tasks}x{self.reduce_tasks}")
        return ObjectKey(JOBS_NAMESPACE, f"{self.job}/shuffle/{m}/{r}")

    def keys(self) -> List[ObjectKey]:
        """All map x reduce fragment keys, row by row"""
        return [self.key(m, r) for m in range(self.map_tasks) for r in range(self.reduce_tasks)]

    def to_dict(self) -> Dict[str, Any]:
        """JSON compatible form for task payloads"""
        return {
            "job": str(self.job),
            "map_tasks": self.map_tasks,
            "reduce_tasks": self.reduce_tasks,
            "medium": self.medium.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ShuffleLayout:
        """Inverse of to_dict"""
        return cls(
            job=JobId(data["job"]),
            map_tasks=int(data["map_tasks"]),
            reduce_tasks=int(data["reduce_tasks"]),
            medium=Medium(data["medium"]),
        )


def write_fragment(
    ctx: InvocationContext, layout: ShuffleLayout, m: int, r: int, data: bytes
) -> None:
    """Stores fragment (m, r) on the layout's medium"""
    key = layout.key(m, r)
    if layout.medium == Medium.KV:
        if len(data) > ctx.kv.value_cap:
            raise IntermediateTooLarge(
                f"fragment {key} is {len(data)} bytes but the key-value cap is "
                f"{ctx.kv.value_cap}; raise the partition count"
            )
        ctx.kv.put(str(key), data)
    else:
        ctx.objects.put(key, data)


def read_fragment(ctx: InvocationContext, layout: ShuffleLayout, m: int, r: int) -> bytes:
    """Loads fragment (m, r) from the layout's medium"""
    key = layout.key(m, r)
    if layout.medium == Medium.KV:
        return ctx.kv.get(str(key))
    return ctx.objects.get(key)
