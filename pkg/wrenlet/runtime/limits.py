"""Resource limits, cold starts, fault injection and admission control"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from wrenlet.storage.shaping import Clock, LatencyDistribution
from wrenlet.util import stable_hash

logger = logging.getLogger(__name__)

GIB = 1 << 30
MIB = 1 << 20


@dataclass(frozen=True)
class ResourceLimits:
    """Per-invocation limits. Defaults are those of 2017-era Lambda."""

    max_runtime: float = 300.0
    max_memory: int = int(1.5 * GIB)
    max_scratch: int = 512 * MIB

    def __post_init__(self) -> None:
        if self.max_runtime <= 0 or self.max_memory <= 0 or self.max_scratch <= 0:
            raise ValueError(f"limits must be positive: {self}")

    @classmethod
    def desk(cls) -> ResourceLimits:
        """Small limits for fast local runs"""
        return cls(max_runtime=10.0, max_memory=256 * MIB, max_scratch=64 * MIB)

    @classmethod
    def lambda_2017(cls) -> ResourceLimits:
        """300 s, 1.5 GB of memory, 512 MB of local storage"""
        return cls()


@dataclass(frozen=True)
class ColdStartModel:
    """
    Latency between an invocation request and the function starting.
    With probability `warm_reuse_probability` a warm container is reused
    and the start takes `warm_latency`.
    """

    distribution: LatencyDistribution = field(default_factory=LatencyDistribution)
    warm_reuse_probability: float = 0.0
    warm_latency: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.warm_reuse_probability <= 1.0:
            raise ValueError("warm_reuse_probability must lie in [0, 1]")
        if self.warm_latency < 0:
            raise ValueError("warm_latency must be nonnegative")

    @classmethod
    def lambda_2017(cls) -> ColdStartModel:
        """Heavy-tailed starts with mean 9.7 s and standard deviation 29.1 s"""
        return cls(LatencyDistribution.lognormal_moments(9.7, 29.1))

    def p99(self) -> float:
        """99th percentile start latency, used as a failure-detection grace period"""
        return max(self.distribution.quantile(0.99), self.warm_latency)


def sample_cold_start(model: ColdStartModel, rng: np.random.Generator) -> float:
    """Draws one start latency; deterministic given the state of `rng`"""
    if model.warm_reuse_probability > 0 and rng.random() < model.warm_reuse_probability:
        return model.warm_latency
    return model.distribution.sample(rng)


class CrashPoint(Enum):
    """Where an injected crash interrupts an invocation"""

    BEFORE_RUN = "before-run"
    MID_RUN = "mid-run"
    BEFORE_RESULT_WRITE = "before-result-write"


@dataclass(frozen=True)
class FaultPlan:
    """
    Seeded crash injection plus an invocation rate limit.

    Every (seed, task, attempt) triple seeds its own generator and crashes
    iff that generator's first draw falls below crash_probability. Victims
    are a function of the seed alone, and the attempts of one task are
    independent, so a task can crash on every retry.
    """

    crash_probability: float = 0.0
    crash_point: CrashPoint = CrashPoint.BEFORE_RUN
    rate_limit: float = math.inf
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.crash_probability <= 1.0:
            raise ValueError("crash_probability must lie in [0, 1]")
        if not self.rate_limit > 0:
            raise ValueError("rate_limit must be positive or unlimited")

    def crashes(self, task: int, attempt: int) -> bool:
        """True iff attempt `attempt` of the `task`-th task is a victim"""
        if self.crash_probability <= 0.0:
            return False
        if self.crash_probability >= 1.0:
            return True
        rng = np.random.default_rng(stable_hash(self.seed, "crash", task, attempt))
        return bool(rng.random() < self.crash_probability)


class TokenBucket:
    """
    Admission control: `rate` tokens per second, at most `burst` banked.
    Callers that find the bucket empty wait for their token in arrival order.
    """

    def __init__(self, clock: Clock, rate: float = math.inf, burst: Optional[float] = None):
        self.clock = clock
        self.rate = rate
        self.burst = burst if burst is not None else max(1.0, rate)
        self._tokens = self.burst
        self._updated = clock.now()
        self._lock = threading.Lock()

    def admit(self) -> float:
        """Blocks until a token is available; returns the admission time"""
        if math.isinf(self.rate):
            return self.clock.now()
        with self._lock:
            now = self.clock.now()
            self._tokens = min(self.burst, self._tokens + (now - self._updated) * self.rate)
            self._updated = now
            self._tokens -= 1.0
            admitted_at = now if self._tokens >= 0 else now - self._tokens / self.rate
        if admitted_at > now:
            logger.debug(f"rate limit delays admission by {admitted_at - now:.3f}s")
        self.clock.sleep_until(admitted_at)
        return admitted_at
