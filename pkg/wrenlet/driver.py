"""
The client side of the engine: map over inputs, track futures by polling
result keys in the object store, and retry failed attempts.
"""
from __future__ import annotations

import json
import logging.config
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from wrenlet.interface import Executor, WaitCondition, WaitMode
from wrenlet.job import (
    JobConfig,
    TaskFuture,
    job_prefix,
    status_key,
)
from wrenlet.models import (
    IntermediateTooLarge,
    JobActive,
    NotFound,
    NotReady,
    ResultMissing,
    TaskFailed,
    TaskState,
    UnknownFunction,
    WaitTimeout,
)
from wrenlet.runtime.executor import AttemptFuture, Runtime
from wrenlet.runtime.limits import ResourceLimits
from wrenlet.storage.shaping import ClientLink
from wrenlet.types import JobId

DRIVER_KEY = "!driver"


@dataclass
class _Job:
    job: JobId
    function_id: str
    config: JobConfig
    futures: List[TaskFuture] = field(default_factory=list)
    released: bool = False

    @property
    def in_flight(self) -> int:
        """Futures with an attempt outstanding"""
        return sum(1 for f in self.futures if f.state == TaskState.RUNNING)

    @property
    def active(self) -> bool:
        """True while some future is not terminal"""
        return any(not f.done() for f in self.futures)

    def limits(self, default: ResourceLimits) -> ResourceLimits:
        """Limits of this job's attempts"""
        return self.config.limits or default


class Driver(Executor):
    """
    Launches map jobs on a Runtime. Completion is observed only through the
    existence of result keys; an attempt has failed when the runtime reports
    an error or when its deadline (attempt start + max_runtime + twice the
    cold start p99) passes without a result.
    """

    def __init__(
        self,
        runtime: Runtime,
        config: Optional[JobConfig] = None,
        seed: int = 0,
    ):
        self.runtime = runtime
        self.objects = runtime.objects
        self.clock = runtime.clock
        self.config = config or JobConfig()
        self.link = ClientLink(DRIVER_KEY, seed)
        self._rng = np.random.default_rng(seed)
        self._jobs: Dict[str, _Job] = {}
        self._lock = threading.RLock()
        self._attached = False
        self.logger = logging.getLogger(__name__)
        logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s %(message)s")

    def __enter__(self) -> Driver:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _attach(self) -> None:
        if not self._attached:
            self.clock.attach(DRIVER_KEY)
            self._attached = True

    def close(self) -> None:
        """Ends the driver's participation in virtual time"""
        if self._attached:
            self.clock.detach()
            self._attached = False

    def new_job_id(self) -> JobId:
        """Unique job id from the clock's timestamp and the driver's random stream"""
        with self._lock:
            while True:
                job = JobId.new(self.clock.timestamp(), self._rng)
                if str(job) not in self._jobs:
                    return job

    def map(
        self,
        function_id: str,
        inputs: Sequence[bytes],
        config: Optional[JobConfig] = None,
    ) -> List[TaskFuture]:
        if function_id not in self.runtime.registry:
            raise UnknownFunction(f"no function registered as {function_id!r}")
        self._attach()
        config = config or self.config
        job = self.new_job_id()
        record = _Job(job, function_id, config)
        for index, payload in enumerate(inputs):
            future = TaskFuture(job, index)
            self.objects.object_put(future.input_key, bytes(payload), self.link)
            record.futures.append(future)
        with self._lock:
            self._jobs[str(job)] = record
            self._launch(record)
        self.logger.info(f"job {job}: mapped {function_id} over {len(inputs)} inputs")
        return list(record.futures)

    def _launch(self, record: _Job) -> None:
        # Caller holds self._lock.
        limit = min(record.config.concurrency, self.runtime.pool_size)
        free = limit - record.in_flight
        for future in record.futures:
            if free <= 0:
                return
            if future.state == TaskState.PENDING:
                self._submit(record, future)
                free -= 1

    def _submit(self, record: _Job, future: TaskFuture) -> None:
        attempt = future.attempts
        future.attempts += 1
        future.advance(TaskState.RUNNING)
        # The deadline starts once the runtime admits the attempt.
        future.deadline = math.inf
        future.invocation = self.runtime.submit(
            record.function_id,
            future.input_key,
            future.result_key,
            limits=record.limits(self.runtime.limits),
            status_key=status_key(record.job, future.index, attempt),
        )

    def _fail_attempt(
        self, record: _Job, future: TaskFuture, error: str, retry: bool = True
    ) -> None:
        # Caller holds self._lock.
        future.error = error
        if retry and future.attempts <= record.config.retry_limit:
            self.logger.warning(
                f"job {record.job} task {future.index} attempt {future.attempts - 1} "
                f"failed ({error}), retrying"
            )
            self._submit(record, future)
            return
        self.logger.error(
            f"job {record.job} task {future.index} failed after {future.attempts} attempts: "
            f"{error}"
        )
        future.advance(TaskState.FAILED)

    def _poll(self, record: _Job) -> None:
        with self._lock:
            if not record.active:
                return
        published = self.objects.object_list(f"{job_prefix(record.job)}result/", self.link)
        done = {int(key.path.rsplit("/", 1)[1]) for key in published}
        with self._lock:
            overdue = self._settle(record, done)
        for future, attempt, invocation in overdue:
            self._give_up(record, future, attempt, invocation)
        with self._lock:
            self._launch(record)
            if not record.active and not record.released:
                record.released = True
                self.runtime.forget(job_prefix(record.job), reports=False)

    def _settle(
        self, record: _Job, done: Set[int]
    ) -> List[Tuple[TaskFuture, int, AttemptFuture]]:
        # Caller holds self._lock. Returns the attempts past their deadline.
        budget = record.limits(self.runtime.limits).max_runtime
        budget += 2 * self.runtime.cold_start.p99()
        now = self.clock.now()
        overdue = []
        for future in record.futures:
            if future.state != TaskState.RUNNING:
                continue
            if future.index in done:
                future.advance(TaskState.SUCCEEDED)
                continue
            invocation = future.invocation
            if invocation is None:
                continue
            if invocation.done():
                error = invocation.exception()
                if error is not None:
                    self._fail_attempt(record, future, repr(error))
                    continue
                report = invocation.result()
                if not report.succeeded:
                    future.failure = report.failure
                    self._fail_attempt(
                        record,
                        future,
                        f"{report.outcome}: {report.error}",
                        retry=not isinstance(report.failure, IntermediateTooLarge),
                    )
                    continue
            if invocation.started_at is None:
                continue
            future.deadline = invocation.started_at + budget
            # A succeeded attempt whose result vanished is lost as well.
            if now > future.deadline:
                overdue.append((future, future.attempts - 1, invocation))
        return overdue

    def _give_up(
        self, record: _Job, future: TaskFuture, attempt: int, invocation: AttemptFuture
    ) -> None:
        invocation.abandon()
        # After abandon() the attempt has either published or never will.
        if self.objects.object_exists(future.result_key, self.link):
            future.advance(TaskState.SUCCEEDED)
            return
        status = {"outcome": "lost", "error": f"no result by {future.deadline:.3f}s"}
        self.objects.object_put(
            status_key(record.job, future.index, attempt),
            json.dumps(status).encode("utf-8"),
            self.link,
        )
        with self._lock:
            if future.state == TaskState.RUNNING and future.attempts - 1 == attempt:
                self._fail_attempt(record, future, "lost: deadline passed without a result")

    def _records(self, futures: Sequence[TaskFuture]) -> List[_Job]:
        with self._lock:
            jobs: Set[str] = {str(f.job) for f in futures}
            return [self._jobs[j] for j in sorted(jobs) if j in self._jobs]

    def wait(
        self,
        futures: Sequence[TaskFuture],
        mode: WaitCondition = WaitMode.ALL,
        timeout: Optional[float] = None,
    ) -> Tuple[List[TaskFuture], List[TaskFuture]]:
        futures = list(futures)
        if isinstance(mode, WaitMode):
            needed = len(futures) if mode == WaitMode.ALL else min(1, len(futures))
        else:
            if mode < 0:
                raise ValueError(f"cannot wait for {mode} futures")
            needed = min(mode, len(futures))
        records = self._records(futures)
        interval = min([r.config.poll_interval for r in records] or [self.config.poll_interval])
        started = self.clock.now()
        while True:
            for record in records:
                self._poll(record)
            with self._lock:
                done = [f for f in futures if f.done()]
                pending = [f for f in futures if not f.done()]
            if len(done) >= needed:
                return done, pending
            if timeout is not None and self.clock.now() - started >= timeout:
                raise WaitTimeout(
                    f"{len(done)} of {len(futures)} futures done after {timeout}s"
                )
            self.clock.sleep(interval)

    def fetch_result(self, future: TaskFuture) -> bytes:
        if future.state != TaskState.SUCCEEDED:
            raise NotReady(f"{future} has not succeeded")
        try:
            return self.objects.object_get(future.result_key, self.link)
        except NotFound as err:
            raise ResultMissing(f"{future.result_key} disappeared") from err

    def results(self, futures: Sequence[TaskFuture]) -> List[bytes]:
        """Waits for all `futures` and returns their outputs in order"""
        self.wait(futures, WaitMode.ALL)
        self.raise_for_failures(futures)
        return [self.fetch_result(future) for future in futures]

    @staticmethod
    def raise_for_failures(futures: Sequence[TaskFuture]) -> None:
        """Raises TaskFailed for the first FAILED future"""
        for future in futures:
            if future.state == TaskState.FAILED:
                raise TaskFailed(
                    f"task {future.index} of job {future.job} failed: {future.error}"
                ) from future.failure

    def cleanup(self, job: JobId) -> int:
        with self._lock:
            record = self._jobs.get(str(job))
            if record is not None and record.active:
                raise JobActive(f"job {job} still has outstanding futures")
            self._jobs.pop(str(job), None)
        self.runtime.forget(job_prefix(job))
        return self.objects.delete_prefix(job_prefix(job), self.link)

