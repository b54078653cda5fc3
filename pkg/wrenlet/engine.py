"""Wires clock, storage services, runtime and driver from an EngineConfig"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from wrenlet.config import EngineConfig
from wrenlet.driver import Driver
from wrenlet.job import JobConfig
from wrenlet.runtime.executor import Runtime
from wrenlet.storage.base import FilesystemBackend, MemoryBackend, ObjectBackend
from wrenlet.storage.interface import ObjectStore
from wrenlet.storage.kv import KvStore
from wrenlet.storage.shaping import Clock, VirtualClock, WallClock

logger = logging.getLogger(__name__)


class Engine:
    """
    One complete engine instance. Usable as a context manager; leaving the
    block ends the driver's participation in virtual time and closes the
    trace given as `trace_path`.
    """

    def __init__(
        self,
        config: Optional[EngineConfig] = None,
        job_config: Optional[JobConfig] = None,
        trace_path: Optional[Path | str] = None,
    ):
        self.config = config or EngineConfig()
        self.clock: Clock = VirtualClock() if self.config.virtual else WallClock()
        self.objects = ObjectStore(
            self._backend(), self.clock, self.config.shaping, seed=self.config.seed
        )
        self.kv = KvStore(
            shards=self.config.kv_shards,
            clock=self.clock,
            shaping=self.config.shaping,
            value_cap=self.config.kv_value_cap,
            seed=self.config.seed,
        )
        self.runtime = Runtime(
            self.objects,
            kv=self.kv,
            clock=self.clock,
            limits=self.config.limits,
            cold_start=self.config.cold_start,
            fault_plan=self.config.fault_plan,
            pool_size=self.config.pool_size,
            seed=self.config.seed,
            compute_flops=self.config.compute_flops,
            trace_path=trace_path,
        )
        self.driver = Driver(
            self.runtime,
            config=job_config or JobConfig(limits=self.config.limits),
            seed=self.config.seed,
        )
        logger.debug(
            f"engine: profile {self.config.profile}, {self.config.clock} clock, "
            f"pool {self.runtime.pool_size}, {self.config.kv_shards} kv shards"
        )

    def _backend(self) -> ObjectBackend:
        if self.config.backend == "filesystem":
            assert self.config.root is not None
            return FilesystemBackend(self.config.root)
        return MemoryBackend()

    def __enter__(self) -> Engine:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def close(self) -> None:
        """Releases the driver and finishes the streaming trace"""
        self.driver.close()
        self.runtime.close()
