"""Registered, versioned functions"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, List

from wrenlet.models import DuplicateRegistration, UnknownFunction

if TYPE_CHECKING:
    from wrenlet.runtime.context import InvocationContext

logger = logging.getLogger(__name__)

EntryPoint = Callable[[bytes, "InvocationContext"], bytes]


@dataclass(frozen=True)
class FunctionDescriptor:
    """
    A named, versioned computation. The entry point receives the input
    payload and an InvocationContext (scratch space, storage handles) and
    returns the output payload. Entry points must be idempotent with
    respect to anything they write to storage.
    """

    name: str
    version: str
    entry: EntryPoint

    def __post_init__(self) -> None:
        for part in (self.name, self.version):
            if not part or ":" in part or "/" in part:
                raise ValueError(f"invalid function name or version {part!r}")

    @property
    def function_id(self) -> str:
        """Stable id `<name>:<version>`"""
        return f"{self.name}:{self.version}"


class FunctionRegistry:
    """Maps function ids to descriptors. Entries are never replaced."""

    def __init__(self) -> None:
        self._functions: Dict[str, FunctionDescriptor] = {}
        self._lock = threading.Lock()

    def register(self, descriptor: FunctionDescriptor) -> str:
        """Adds `descriptor`; raises DuplicateRegistration if its id is taken"""
        function_id = descriptor.function_id
        with self._lock:
            if function_id in self._functions:
                raise DuplicateRegistration(f"{function_id} is already registered")
            self._functions[function_id] = descriptor
        logger.debug(f"registered {function_id}")
        return function_id

    def ensure_registered(self, descriptor: FunctionDescriptor) -> str:
        """Registers `descriptor` unless the identical descriptor already is"""
        with self._lock:
            existing = self._functions.get(descriptor.function_id)
            if existing is None:
                self._functions[descriptor.function_id] = descriptor
            elif existing.entry is not descriptor.entry:
                raise DuplicateRegistration(
                    f"{descriptor.function_id} is registered with another entry point"
                )
        return descriptor.function_id

    def lookup(self, function_id: str) -> FunctionDescriptor:
        """Descriptor registered under `function_id`, or UnknownFunction"""
        with self._lock:
            descriptor = self._functions.get(function_id)
        if descriptor is None:
            raise UnknownFunction(f"no function registered as {function_id!r}")
        return descriptor

    def __contains__(self, function_id: object) -> bool:
        with self._lock:
            return function_id in self._functions

    def function_ids(self) -> List[str]:
        """All registered ids, sorted"""
        with self._lock:
            return sorted(self._functions)
