"""
Job configuration, the storage key layout of a job and the futures it hands out.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

from wrenlet.models import TaskState, WrenletError
from wrenlet.runtime.executor import AttemptFuture
from wrenlet.runtime.limits import ResourceLimits
from wrenlet.types import JobId, ObjectKey

JOBS_NAMESPACE = "jobs"


def job_prefix(job: JobId) -> str:
    """Text prefix of every key belonging to `job`"""
    return f"{JOBS_NAMESPACE}/{job}/"


def input_key(job: JobId, index: int) -> ObjectKey:
    """jobs/<job>/input/<index>"""
    return _task_key(job, "input", index)


def result_key(job: JobId, index: int) -> ObjectKey:
    """jobs/<job>/result/<index>"""
    return _task_key(job, "result", index)


def status_key(job: JobId, index: int, attempt: int) -> ObjectKey:
    """jobs/<job>/status/<index>/<attempt>"""
    if attempt < 0:
        raise ValueError(f"negative attempt {attempt}")
    return _task_key(job, "status", index).child(attempt)


def _task_key(job: JobId, kind: str, index: int) -> ObjectKey:
    if index < 0:
        raise ValueError(f"negative task index {index}")
    return ObjectKey(JOBS_NAMESPACE, f"{job}/{kind}/{index}")


@dataclass(frozen=True)
class JobConfig:
    """
    retry_limit: retries after the first attempt of each task
    poll_interval: seconds between result-key polls
    limits: per-invocation limits (None uses the runtime's)
    max_concurrency: most attempts in flight per job (None for unlimited)
    """

    retry_limit: int = 3
    poll_interval: float = 0.1
    limits: Optional[ResourceLimits] = None
    max_concurrency: Optional[int] = None

    def __post_init__(self) -> None:
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be nonnegative, got {self.retry_limit}")
        if not self.poll_interval > 0:
            raise ValueError(f"poll_interval must be positive, got {self.poll_interval}")
        if self.max_concurrency is not None and self.max_concurrency < 1:
            raise ValueError(f"max_concurrency must be positive, got {self.max_concurrency}")

    @property
    def concurrency(self) -> float:
        """max_concurrency, with unlimited as infinity"""
        return math.inf if self.max_concurrency is None else self.max_concurrency


# pylint: disable=too-many-instance-attributes
class TaskFuture:
    """
    Observable life cycle of one task of a map call. The state only moves
    forward (PENDING -> RUNNING -> SUCCEEDED or FAILED) and is SUCCEEDED
    exactly when the result key exists.
    """

    def __init__(self, job: JobId, index: int):
        self.job = job
        self.index = index
        self.state = TaskState.PENDING
        self.attempts = 0
        self.input_key = input_key(job, index)
        self.result_key = result_key(job, index)
        self.error: Optional[str] = None
        self.failure: Optional[WrenletError] = None
        self.deadline = math.inf
        self.invocation: Optional[AttemptFuture] = None
        self._lock = threading.Lock()

    @property
    def status_key(self) -> ObjectKey:
        """Status object of the latest attempt"""
        return status_key(self.job, self.index, max(0, self.attempts - 1))

    def done(self) -> bool:
        """True once the future is SUCCEEDED or FAILED"""
        return self.state.is_terminal()

    def advance(self, state: TaskState) -> None:
        """Moves to `state`; backwards moves are ignored"""
        order = [TaskState.PENDING, TaskState.RUNNING]
        with self._lock:
            if self.state.is_terminal():
                return
            if state in order and order.index(state) < order.index(self.state):
                return
            self.state = state

    def __repr__(self) -> str:
        return (
            f"TaskFuture(job={self.job}, index={self.index}, "
            f"state={self.state.value}, attempts={self.attempts})"
        )
