"""
Clocks and throughput shaping.

Every delay in the engine (storage transfers, cold starts, admission waits,
driver polling) goes through a Clock. WallClock sleeps for real; VirtualClock
advances a simulated clock instead and runs its participants one at a time,
earliest wake time first, so that shaped runs are reproducible.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import threading
import time
from abc import ABC, abstractmethod
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from statistics import NormalDist
from typing import Callable, ContextManager, Dict, Iterator, List, Optional, Tuple

import numpy as np

from wrenlet.models import AttemptAbandoned
from wrenlet.util import VIRTUAL_EPOCH

logger = logging.getLogger(__name__)

UNLIMITED = math.inf


@dataclass(frozen=True)
class LatencyDistribution:
    """
    A nonnegative duration distribution: fixed, or lognormal.
    Lognormal distributions are stored by their log-space parameters.
    """

    kind: str = "fixed"
    value: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "lognormal"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.value < 0 or self.sigma < 0:
            raise ValueError(f"negative parameter in {self}")

    @classmethod
    def fixed(cls, seconds: float) -> LatencyDistribution:
        """Always `seconds`"""
        return cls("fixed", value=seconds)

    @classmethod
    def lognormal_median(cls, median: float, sigma: float) -> LatencyDistribution:
        """Lognormal with the given median and log-space sigma"""
        return cls("lognormal", mu=math.log(median), sigma=sigma)

    @classmethod
    def lognormal_moments(cls, mean: float, std: float) -> LatencyDistribution:
        """Lognormal whose samples have the given mean and standard deviation"""
        variance = math.log(1.0 + (std / mean) ** 2)
        return cls("lognormal", mu=math.log(mean) - variance / 2, sigma=math.sqrt(variance))

    @classmethod
    def parse(cls, text: str) -> LatencyDistribution:
        """
        Parses `fixed:<s>`, `lognormal-median:<median>:<sigma>`
        or `lognormal-mean:<mean>:<std>`
        """
        name, *args = text.strip().split(":")
        try:
            params = [float(a) for a in args]
            if name == "fixed" and len(params) == 1:
                return cls.fixed(params[0])
            if name == "lognormal-median" and len(params) == 2:
                return cls.lognormal_median(*params)
            if name == "lognormal-mean" and len(params) == 2:
                return cls.lognormal_moments(*params)
        except ValueError as err:
            raise ValueError(f"could not parse distribution {text!r}") from err
        raise ValueError(f"could not parse distribution {text!r}")

    @property
    def mean(self) -> float:
        """Expected value"""
        if self.kind == "fixed":
            return self.value
        return math.exp(self.mu + self.sigma**2 / 2)

    @property
    def std(self) -> float:
        """Standard deviation"""
        if self.kind == "fixed":
            return 0.0
        return math.sqrt((math.exp(self.sigma**2) - 1) * math.exp(2 * self.mu + self.sigma**2))

    def quantile(self, q: float) -> float:
        """Inverse CDF, used for failure detection grace periods"""
        if self.kind == "fixed":
            return self.value
        return math.exp(self.mu + self.sigma * NormalDist().inv_cdf(q))

    def sample(self, rng: np.random.Generator) -> float:
        """Draws one duration"""
        if self.kind == "fixed":
            return self.value
        return float(rng.lognormal(mean=self.mu, sigma=self.sigma))

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.value:g}"
        return f"lognormal-median:{math.exp(self.mu):g}:{self.sigma:g}"


# pylint: disable=too-many-instance-attributes
@dataclass(frozen=True)
class ShapingProfile:
    """
    Bandwidth, latency and rate model of the two storage services.
    Every rate is strictly positive; UNLIMITED (inf) disables that limit.
    """

    per_client_read_bw: float = UNLIMITED
    per_client_write_bw: float = UNLIMITED
    op_latency: LatencyDistribution = field(default_factory=LatencyDistribution)
    kv_ops_per_client_per_sec: float = UNLIMITED
    kv_shard_ops_per_sec: float = UNLIMITED
    aggregate_bw_cap: float = UNLIMITED
    kv_client_bw: float = UNLIMITED
    kv_shard_bw: float = UNLIMITED
    transfer_part: int = 1 << 20

    def __post_init__(self) -> None:
        rates = {
            "per_client_read_bw": self.per_client_read_bw,
            "per_client_write_bw": self.per_client_write_bw,
            "kv_ops_per_client_per_sec": self.kv_ops_per_client_per_sec,
            "kv_shard_ops_per_sec": self.kv_shard_ops_per_sec,
            "aggregate_bw_cap": self.aggregate_bw_cap,
            "kv_client_bw": self.kv_client_bw,
            "kv_shard_bw": self.kv_shard_bw,
        }
        for name, rate in rates.items():
            if not rate > 0:
                raise ValueError(f"{name} must be positive or unlimited, got {rate}")
        if self.transfer_part <= 0:
            raise ValueError("transfer_part must be positive")

    @classmethod
    def unshaped(cls) -> ShapingProfile:
        """No-op profile: every operation completes immediately"""
        return cls()

    @classmethod
    def lambda_2017(cls) -> ShapingProfile:
        """Per-worker S3 and Redis rates of 2017-era Lambda workers"""
        return cls(
            per_client_read_bw=40e6,
            per_client_write_bw=30e6,
            op_latency=LatencyDistribution.lognormal_median(0.020, 0.5),
            kv_ops_per_client_per_sec=700.0,
            kv_shard_ops_per_sec=3500.0,
            kv_client_bw=50e6,
            kv_shard_bw=400e6,
        )

    @property
    def object_shaped(self) -> bool:
        """False when object store operations are free"""
        return not (
            math.isinf(self.per_client_read_bw)
            and math.isinf(self.per_client_write_bw)
            and math.isinf(self.aggregate_bw_cap)
            and self.op_latency.mean == 0
        )

    @property
    def kv_shaped(self) -> bool:
        """False when key-value operations are free"""
        return not all(
            math.isinf(rate)
            for rate in (
                self.kv_ops_per_client_per_sec,
                self.kv_shard_ops_per_sec,
                self.kv_client_bw,
                self.kv_shard_bw,
            )
        )


class Participant:
    """A thread of control known to a virtual clock"""

    def __init__(self, key: str):
        self.key = key
        self.granted = False

    def __repr__(self) -> str:
        return f"Participant({self.key!r})"


class Clock(ABC):
    """Source of time and sleeping for everything that is shaped"""

    virtual = False

    @abstractmethod
    def now(self) -> float:
        """Seconds since the clock started"""

    @abstractmethod
    def sleep_until(self, deadline: float) -> None:
        """Blocks until `now() >= deadline`"""

    def sleep(self, seconds: float) -> None:
        """Blocks for `seconds`"""
        if seconds > 0:
            self.sleep_until(self.now() + seconds)

    @abstractmethod
    def timestamp(self) -> datetime:
        """Calendar time matching `now()`"""

    # The participant protocol is a no-op for real time.
    def attach(self, key: str) -> Optional[Participant]:
        """Makes the calling thread a running participant"""
        return None

    def detach(self) -> None:
        """Ends the calling thread's participation"""

    def spawn(self, key: str) -> Optional[Participant]:
        """Creates a participant that is ready to run at `now()`"""
        return None

    def adopt(self, participant: Optional[Participant]) -> None:
        """Runs the calling thread as `participant` once it is scheduled"""

    @contextmanager
    def participating(self, key: str) -> Iterator[None]:
        """Attaches the calling thread for the duration of the block"""
        self.attach(key)
        try:
            yield
        finally:
            self.detach()


class WallClock(Clock):
    """Real time"""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def sleep_until(self, deadline: float) -> None:
        remaining = deadline - self.now()
        if remaining > 0:
            time.sleep(remaining)

    def timestamp(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock(Clock):
    """
    Simulated time. At most one participant runs at any moment; when it
    blocks, the participant with the earliest wake time (ties broken by key)
    runs next and the clock jumps to its wake time. A participant that blocks
    on anything but this clock stalls the simulation.
    """

    virtual = True

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._now = 0.0
        self._active = 0
        self._queue: List[Tuple[float, str, int, Participant]] = []
        self._seq = itertools.count()
        self._local = threading.local()

    def now(self) -> float:
        return self._now

    def timestamp(self) -> datetime:
        return VIRTUAL_EPOCH + timedelta(seconds=self._now)

    def _current(self) -> Optional[Participant]:
        return getattr(self._local, "participant", None)

    def attach(self, key: str) -> Optional[Participant]:
        current = self._current()
        if current is not None:
            return current
        participant = Participant(key)
        with self._cond:
            self._active += 1
        self._local.participant = participant
        return participant

    def detach(self) -> None:
        if self._current() is None:
            return
        self._local.participant = None
        with self._cond:
            self._active -= 1
            self._dispatch()

    def spawn(self, key: str) -> Optional[Participant]:
        participant = Participant(key)
        with self._cond:
            heapq.heappush(self._queue, (self._now, key, next(self._seq), participant))
            self._dispatch()
        return participant

    def adopt(self, participant: Optional[Participant]) -> None:
        assert participant is not None, "virtual clock needs a spawned participant"
        self._local.participant = participant
        with self._cond:
            self._cond.wait_for(lambda: participant.granted)
            participant.granted = False

    def sleep_until(self, deadline: float) -> None:
        participant = self._current()
        if participant is None:
            # Unknown threads take part for the duration of this sleep.
            with self.participating(f"~{threading.current_thread().name}"):
                self.sleep_until(deadline)
            return
        with self._cond:
            wake_at = max(deadline, self._now)
            heapq.heappush(self._queue, (wake_at, participant.key, next(self._seq), participant))
            self._active -= 1
            self._dispatch()
            self._cond.wait_for(lambda: participant.granted)
            participant.granted = False

    def _dispatch(self) -> None:
        # Caller holds self._cond.
        if self._active > 0 or not self._queue:
            return
        wake_at, _, _, participant = heapq.heappop(self._queue)
        self._now = max(self._now, wake_at)
        self._active += 1
        participant.granted = True
        self._cond.notify_all()


class SharedResource:
    """
    A first-come first-served server with a fixed service rate, e.g. the
    aggregate bandwidth of the object store or one key-value shard.
    """

    def __init__(self, rate: float):
        self.rate = rate
        self._free_at = 0.0
        self._lock = threading.Lock()

    def reserve(self, start: float, amount: float) -> float:
        """Books `amount` units of work arriving at `start`; returns completion time"""
        if math.isinf(self.rate):
            return start
        with self._lock:
            begin = max(start, self._free_at)
            self._free_at = begin + amount / self.rate
            return self._free_at


class IntervalSet:
    """Union of closed time intervals, merged as they are added"""

    def __init__(self) -> None:
        self._intervals: List[Tuple[float, float]] = []
        self._lock = threading.Lock()

    def add(self, start: float, end: float) -> None:
        """Adds [start, end] to the union"""
        with self._lock:
            if not self._intervals or start > self._intervals[-1][1]:
                self._intervals.append((start, end))
            elif start >= self._intervals[-1][0]:
                last_start, last_end = self._intervals[-1]
                self._intervals[-1] = (last_start, max(last_end, end))
            else:
                self._intervals = merge_intervals(self._intervals + [(start, end)])

    def intervals(self) -> List[Tuple[float, float]]:
        """Merged, sorted intervals"""
        with self._lock:
            return list(self._intervals)

    def total(self) -> float:
        """Length of the union"""
        return sum(end - start for start, end in self.intervals())


def merge_intervals(intervals: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Sorts and merges overlapping or touching intervals"""
    merged: List[Tuple[float, float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


class CommitGate:
    """
    Serializes commits against closing. Once close() returns, no commit made
    through the gate can still be in progress or start later.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.closed = False

    def close(self) -> None:
        """Closes the gate, waiting for a commit in progress"""
        with self._lock:
            self.closed = True

    @contextmanager
    def holding(self) -> Iterator[None]:
        """Runs the block as a commit; raises AttemptAbandoned once closed"""
        with self._lock:
            if self.closed:
                raise AttemptAbandoned("attempt was abandoned before its commit")
            yield


# pylint: disable=too-many-instance-attributes
class ClientLink:
    """
    One storage client: a worker invocation or the driver. Carries the
    client's latency random stream, an optional hook run before every
    operation (cancellation checks), an optional commit gate and the
    per-category time and byte counters that end up in invocation reports.
    """

    def __init__(
        self,
        name: str,
        seed: int = 0,
        before_op: Optional[Callable[[], None]] = None,
        gate: Optional[CommitGate] = None,
    ):
        self.name = name
        self.rng = np.random.default_rng(seed)
        self.before_op = before_op
        self.gate = gate
        self.label: Optional[str] = None
        self.bytes_read = 0
        self.bytes_written = 0
        self.timings: Dict[str, float] = {}

    def check(self) -> None:
        """Runs the pre-operation hook"""
        if self.before_op is not None:
            self.before_op()

    def committing(self) -> ContextManager[None]:
        """Context of a write that becomes visible to other clients"""
        return self.gate.holding() if self.gate is not None else nullcontext()

    def charge(self, default_label: str, seconds: float) -> None:
        """Adds `seconds` to the current label (or `default_label`)"""
        label = self.label or default_label
        self.timings[label] = self.timings.get(label, 0.0) + seconds

    @contextmanager
    def labelled(self, label: str) -> Iterator[None]:
        """Attributes time spent in the block to `label`"""
        previous, self.label = self.label, label
        try:
            yield
        finally:
            self.label = previous
