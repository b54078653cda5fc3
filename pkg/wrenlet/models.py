"""
Errors and the records that travel between runtime, driver and cost model.
"""
from __future__ import annotations

import logging.config
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional, Type

from wrenlet.util import format_timestamp, parse_timestamp

log = logging.getLogger(__name__)
logging.basicConfig(
    format="%(asctime)s %(levelname)s %(name)s %(message)s", level=logging.INFO
)


class WrenletError(Exception):
    """Base class of every error raised by this package"""


class InvalidKey(WrenletError):
    """Object key or job id violates the key rules"""


class NotFound(WrenletError):
    """Key was never written, or was deleted"""


class CapacityExceeded(WrenletError):
    """Storage backend is full"""


class ValueTooLarge(WrenletError):
    """Value exceeds the key-value store's value cap"""


class NotAnInteger(WrenletError):
    """Stored value cannot be read as a decimal integer"""


class DuplicateRegistration(WrenletError):
    """A function with this (name, version) is already registered"""


class UnknownFunction(WrenletError):
    """No function is registered under this id"""


class InvocationError(WrenletError):
    """Base class for errors that terminate an invocation"""


class TimeLimitExceeded(InvocationError):
    """Invocation ran past its max_runtime"""


class MemoryLimitExceeded(InvocationError):
    """Accounted allocations exceeded max_memory"""


class ScratchLimitExceeded(InvocationError):
    """Scratch files exceeded max_scratch"""


class InjectedCrash(InvocationError):
    """Crash injected by the fault plan"""


class AttemptAbandoned(InvocationError):
    """The driver gave up on this attempt; it may no longer publish"""


class NotReady(WrenletError):
    """Future has not succeeded (yet)"""


class ResultMissing(WrenletError):
    """Result key of a succeeded future is gone: something deleted it"""


class JobActive(WrenletError):
    """Job still has outstanding futures"""


class WaitTimeout(WrenletError):
    """wait() deadline elapsed before its condition held"""


class TaskFailed(WrenletError):
    """A future ended FAILED after exhausting its retries"""


class GatherTooLarge(WrenletError):
    """Combined map outputs exceed the driver memory budget"""


class TooFewSamples(WrenletError):
    """Fewer samples than partitions were drawn"""


class IntermediateTooLarge(ValueTooLarge):
    """A shuffle fragment does not fit into a key-value value"""


class Divergence(WrenletError):
    """Objective grew far above its initial value"""


class MalformedTrace(WrenletError):
    """Trace record cannot be parsed"""


class VerificationFailed(WrenletError):
    """Benchmark output disagrees with its serial oracle"""


class ConfigError(WrenletError):
    """Configuration file or profile cannot be used"""


def error_class(name: str) -> Type[WrenletError]:
    """Looks up an error class by name, falling back to InvocationError"""
    pending = [WrenletError]
    while pending:
        cls = pending.pop()
        if cls.__name__ == name:
            return cls
        pending.extend(cls.__subclasses__())
    return InvocationError


class TaskState(Enum):
    """
    Life cycle of a TaskFuture. Transitions only go forward:
    PENDING -> RUNNING -> {SUCCEEDED, FAILED}
    """

    PENDING = "PENDING"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"

    @classmethod
    def terminal_states(cls) -> set[TaskState]:
        """Returns the states a future never leaves"""
        return {cls.SUCCEEDED, cls.FAILED}

    def is_terminal(self) -> bool:
        """Returns True if the state is SUCCEEDED or FAILED"""
        return self in TaskState.terminal_states()


SUCCEEDED_OUTCOME = "succeeded"


# pylint: disable=too-many-instance-attributes
@dataclass
class InvocationReport:
    """
    Everything observed about one invocation attempt. Appended to the
    structured trace (one JSON object per line) and read back by the cost model.
    """

    function_id: str
    input_key: str
    output_key: str
    task: int
    attempt: int
    outcome: str
    timestamp: datetime
    submitted_at: float
    started_at: float
    ended_at: float
    start_latency: float
    memory_limit: int
    peak_memory: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    published: bool = False
    error: Optional[str] = None
    timings: Dict[str, float] = field(default_factory=dict)
    failure: Optional[WrenletError] = field(default=None, compare=False, repr=False)

    @property
    def succeeded(self) -> bool:
        """True iff the function ran to completion and its result is stored"""
        return self.outcome == SUCCEEDED_OUTCOME

    @property
    def run_duration(self) -> float:
        """Seconds between function start and end (excludes start latency)"""
        return max(0.0, self.ended_at - self.started_at)

    @property
    def billed_duration(self) -> float:
        """Duration the provider bills before rounding to its increment"""
        return self.run_duration

    def raise_for_outcome(self) -> None:
        """Raises the error that ended this invocation, if any"""
        if self.succeeded:
            return
        if self.failure is not None:
            raise self.failure
        raise error_class(self.outcome)(self.error or self.outcome)

    def to_dict(self) -> dict[str, Any]:
        """Flat, JSON compatible form used for the trace"""
        return {
            "kind": "invocation",
            "function_id": self.function_id,
            "input_key": self.input_key,
            "output_key": self.output_key,
            "task": self.task,
            "attempt": self.attempt,
            "outcome": self.outcome,
            "error": self.error,
            "timestamp": format_timestamp(self.timestamp),
            "submitted_at": self.submitted_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "start_latency": self.start_latency,
            "run_duration": self.run_duration,
            "billed_duration": self.billed_duration,
            "memory_limit": self.memory_limit,
            "peak_memory": self.peak_memory,
            "bytes_read": self.bytes_read,
            "bytes_written": self.bytes_written,
            "published": self.published,
            "timings": dict(self.timings),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InvocationReport:
        """Constructor from a trace record. See unit test for sample input."""
        try:
            return cls(
                function_id=str(data["function_id"]),
                input_key=str(data["input_key"]),
                output_key=str(data["output_key"]),
                task=int(data["task"]),
                attempt=int(data["attempt"]),
                outcome=str(data["outcome"]),
                error=data.get("error"),
                timestamp=parse_timestamp(data["timestamp"]),
                submitted_at=float(data["submitted_at"]),
                started_at=float(data["started_at"]),
                ended_at=float(data["ended_at"]),
                start_latency=float(data["start_latency"]),
                memory_limit=int(data["memory_limit"]),
                peak_memory=int(data.get("peak_memory", 0)),
                bytes_read=int(data.get("bytes_read", 0)),
                bytes_written=int(data.get("bytes_written", 0)),
                published=bool(data.get("published", False)),
                timings={k: float(v) for k, v in data.get("timings", {}).items()},
            )
        except (KeyError, ValueError, TypeError, AttributeError) as err:
            log.error(f"can't build InvocationReport from {data}: {err!r}")
            raise MalformedTrace(f"bad invocation record: {err!r}") from err
