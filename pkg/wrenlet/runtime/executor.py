"""
The function runtime: runs invocations on a bounded pool, each in a fresh
context, under resource limits, cold starts, rate limiting and fault injection.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import itertools
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from wrenlet.file.interface import FileIO
from wrenlet.models import (
    AttemptAbandoned,
    InjectedCrash,
    InvocationError,
    InvocationReport,
    SUCCEEDED_OUTCOME,
    TimeLimitExceeded,
    WrenletError,
)
from wrenlet.runtime.context import InvocationContext, Scratch
from wrenlet.runtime.limits import (
    ColdStartModel,
    CrashPoint,
    FaultPlan,
    ResourceLimits,
    TokenBucket,
    sample_cold_start,
)
from wrenlet.runtime.registry import FunctionDescriptor, FunctionRegistry
from wrenlet.storage.interface import ObjectStore
from wrenlet.storage.kv import KvStore
from wrenlet.storage.shaping import Clock, ClientLink, CommitGate, Participant
from wrenlet.types import KeyLike, ObjectKey
from wrenlet.util import stable_hash

logger = logging.getLogger(__name__)

DEFAULT_COMPUTE_FLOPS = 18e9


class AttemptFuture(Future):
    """
    Future of one submitted attempt. `started_at` is set once the attempt is
    admitted past the rate limit. An abandoned attempt stops at its next
    storage operation and never publishes a result.
    """

    def __init__(self) -> None:
        super().__init__()
        self.started_at: Optional[float] = None
        self.gate = CommitGate()

    @property
    def abandoned(self) -> bool:
        """True once abandon() was called"""
        return self.gate.closed

    def abandon(self) -> None:
        """Stops the attempt; a publish in progress completes before this returns"""
        self.gate.close()


# pylint: disable=too-many-instance-attributes
@dataclass
class _Invocation:
    function_id: str
    input_key: ObjectKey
    output_key: ObjectKey
    limits: ResourceLimits
    status_key: Optional[ObjectKey]
    task: int
    attempt: int
    submitted_at: float
    future: AttemptFuture = field(default_factory=AttemptFuture)
    participant: Optional[Participant] = None

    @property
    def name(self) -> str:
        """Participant and client name of this attempt"""
        return f"{self.output_key}#{self.attempt:04d}"


class _Guard:
    """Cancellation checks run before each storage operation of an invocation"""

    def __init__(self, clock: Clock, deadline: float, crash_mid_run: bool, gate: CommitGate):
        self.clock = clock
        self.gate = gate
        self.deadline = deadline
        self.crash_mid_run = crash_mid_run
        self.running = False
        self.armed = True

    def __call__(self) -> None:
        if not self.armed:
            return
        if self.gate.closed:
            raise AttemptAbandoned("attempt was abandoned by the driver")
        if self.clock.now() > self.deadline:
            raise TimeLimitExceeded(f"deadline {self.deadline:.3f}s passed")
        if self.running and self.crash_mid_run:
            self.crash_mid_run = False
            raise InjectedCrash("injected crash (mid-run)")


# pylint: disable=too-many-arguments
class Runtime:
    """
    Emulated function-as-a-service runtime. Invocations read their input
    from the object store, run a registered entry point, and publish the
    result with an atomic create so that a result key is written by exactly
    one successful attempt.
    """

    def __init__(
        self,
        objects: ObjectStore,
        kv: Optional[KvStore] = None,
        clock: Optional[Clock] = None,
        limits: Optional[ResourceLimits] = None,
        cold_start: Optional[ColdStartModel] = None,
        fault_plan: Optional[FaultPlan] = None,
        pool_size: Optional[int] = None,
        seed: int = 0,
        compute_flops: float = DEFAULT_COMPUTE_FLOPS,
        trace_path: Optional[Path | str] = None,
        scratch_root: Optional[Path] = None,
    ):
        self.objects = objects
        self.clock = clock or objects.clock
        self.kv = kv or KvStore(clock=self.clock)
        self.limits = limits or ResourceLimits.desk()
        self.cold_start = cold_start or ColdStartModel()
        self.pool_size = pool_size or os.cpu_count() or 1
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be positive, got {pool_size}")
        self.seed = seed
        self.compute_flops = compute_flops
        self.scratch_root = scratch_root
        self.registry = FunctionRegistry()
        self.fault_plan = FaultPlan()
        self._bucket = TokenBucket(self.clock)
        self.set_fault_plan(fault_plan or FaultPlan())
        self._trace: Optional[Tuple[FileIO, str]] = None
        if trace_path is not None:
            self._trace = FileIO.for_file(trace_path)
        self._lock = threading.Lock()
        self._tasks: Dict[str, int] = {}
        self._task_numbers = itertools.count()
        self._attempts: Dict[str, int] = {}
        self._reports: List[InvocationReport] = []
        self._queue: Deque[_Invocation] = deque()
        self._running = 0

    def register_function(self, descriptor: FunctionDescriptor) -> str:
        """Registers `descriptor`; returns its id. Raises DuplicateRegistration."""
        return self.registry.register(descriptor)

    def ensure_registered(self, descriptor: FunctionDescriptor) -> str:
        """Registers `descriptor` unless it already is"""
        return self.registry.ensure_registered(descriptor)

    def set_fault_plan(self, plan: FaultPlan) -> None:
        """Applies `plan` to subsequent invocations"""
        self.fault_plan = plan
        self._bucket = TokenBucket(self.clock, plan.rate_limit)
        logger.info(
            f"fault plan: crash p={plan.crash_probability} at {plan.crash_point.value}, "
            f"rate limit {plan.rate_limit}/s, seed {plan.seed}"
        )

    @property
    def reports(self) -> List[InvocationReport]:
        """Reports of all finished invocations, in completion order"""
        with self._lock:
            return list(self._reports)

    def trace_records(self) -> List[Dict]:
        """Reports as trace records, plus the key-value activity record"""
        records = [report.to_dict() for report in self.reports]
        records.append(self.kv.activity_record())
        return records

    def write_trace(self, filepath: Path | str) -> None:
        """Writes every trace record to an NDJSON file"""
        file_io, name = FileIO.for_file(filepath)
        file_io.write_ndjson(self.trace_records(), name, skip_empty=False)

    def close(self) -> None:
        """Ends the streaming trace with the key-value activity record"""
        with self._lock:
            trace, self._trace = self._trace, None
        if trace is not None:
            file_io, name = trace
            file_io.append_ndjson([self.kv.activity_record()], name)
            logger.info(f"closed trace {name}")

    def forget(self, prefix: str, reports: bool = True) -> None:
        """
        Drops the attempt counters of output keys under `prefix`, and with
        `reports` their invocation reports as well.
        """
        with self._lock:
            for key in [k for k in self._tasks if k.startswith(prefix)]:
                del self._tasks[key]
                self._attempts.pop(key, None)
            if reports:
                self._reports = [r for r in self._reports if not r.output_key.startswith(prefix)]

    def _prepare(
        self,
        function_id: str,
        input_key: KeyLike,
        output_key: KeyLike,
        limits: Optional[ResourceLimits],
        status_key: Optional[KeyLike],
    ) -> _Invocation:
        output = ObjectKey.of(output_key)
        with self._lock:
            if str(output) not in self._tasks:
                self._tasks[str(output)] = next(self._task_numbers)
            task = self._tasks[str(output)]
            attempt = self._attempts.get(str(output), 0)
            self._attempts[str(output)] = attempt + 1
        return _Invocation(
            function_id=function_id,
            input_key=ObjectKey.of(input_key),
            output_key=output,
            limits=limits or self.limits,
            status_key=ObjectKey.of(status_key) if status_key is not None else None,
            task=task,
            attempt=attempt,
            submitted_at=self.clock.now(),
        )

    def invoke(
        self,
        function_id: str,
        input_key: KeyLike,
        output_key: KeyLike,
        limits: Optional[ResourceLimits] = None,
        status_key: Optional[KeyLike] = None,
    ) -> InvocationReport:
        """
        Runs one invocation in the calling thread and returns its report.
        Raises the error that ended the invocation, if any.
        """
        invocation = self._prepare(function_id, input_key, output_key, limits, status_key)
        report = self._execute(invocation)
        report.raise_for_outcome()
        return report

    def submit(
        self,
        function_id: str,
        input_key: KeyLike,
        output_key: KeyLike,
        limits: Optional[ResourceLimits] = None,
        status_key: Optional[KeyLike] = None,
    ) -> AttemptFuture:
        """Queues one invocation on the pool; the future resolves to its report"""
        invocation = self._prepare(function_id, input_key, output_key, limits, status_key)
        with self._lock:
            if self._running < self.pool_size:
                self._running += 1
                self._start(invocation)
            else:
                self._queue.append(invocation)
        return invocation.future

    def _start(self, invocation: _Invocation) -> None:
        # Caller holds self._lock.
        invocation.participant = self.clock.spawn(invocation.name)
        thread = threading.Thread(
            target=self._worker, args=(invocation,), name=invocation.name, daemon=True
        )
        thread.start()

    def _worker(self, invocation: _Invocation) -> None:
        self.clock.adopt(invocation.participant)
        try:
            invocation.future.set_result(self._execute(invocation))
        except Exception as err:  # pylint: disable=broad-except
            logger.error(f"{invocation.name} failed outside its function: {err!r}")
            invocation.future.set_exception(err)
        finally:
            with self._lock:
                if self._queue:
                    self._start(self._queue.popleft())
                else:
                    self._running -= 1
            self.clock.detach()

    def _rng(self, invocation: _Invocation) -> np.random.Generator:
        return np.random.default_rng([self.seed, invocation.task, invocation.attempt])

    # pylint: disable=too-many-locals,broad-except
    def _execute(self, invocation: _Invocation) -> InvocationReport:
        rng = self._rng(invocation)
        plan = self.fault_plan
        crash = plan.crashes(invocation.task, invocation.attempt)
        limits = invocation.limits

        self._bucket.admit()
        invocation.future.started_at = self.clock.now()
        self.clock.sleep(sample_cold_start(self.cold_start, rng))
        started_at = self.clock.now()
        deadline = started_at + limits.max_runtime
        crash_mid_run = crash and plan.crash_point == CrashPoint.MID_RUN
        guard = _Guard(self.clock, deadline, crash_mid_run, invocation.future.gate)
        link = ClientLink(
            invocation.name,
            seed=stable_hash(self.seed, "link", invocation.task, invocation.attempt),
            before_op=guard,
            gate=invocation.future.gate,
        )
        link.charge("start", started_at - invocation.submitted_at)
        scratch = Scratch(limits, self.scratch_root)
        published = False
        failure: Optional[WrenletError] = None
        try:
            descriptor = self.registry.lookup(invocation.function_id)
            if crash and plan.crash_point == CrashPoint.BEFORE_RUN:
                raise InjectedCrash("injected crash (before-run)")
            with link.labelled("input"):
                payload = self.objects.object_get(invocation.input_key, link)
            scratch.allocate(len(payload))
            context = InvocationContext(
                function_id=invocation.function_id,
                task=invocation.task,
                attempt=invocation.attempt,
                clock=self.clock,
                link=link,
                objects=self.objects,
                kv=self.kv,
                scratch=scratch,
                deadline=deadline,
                rng=rng,
                compute_flops=self.compute_flops,
            )
            guard.running = True
            result = descriptor.entry(payload, context)
            guard.running = False
            if crash_mid_run:
                raise InjectedCrash("injected crash (mid-run)")
            if self.clock.now() > deadline:
                raise TimeLimitExceeded(
                    f"ran {self.clock.now() - started_at:.3f}s, limit {limits.max_runtime}s"
                )
            if crash and plan.crash_point == CrashPoint.BEFORE_RESULT_WRITE:
                raise InjectedCrash("injected crash (before-result-write)")
            with link.labelled("output"):
                published = self.objects.object_put_if_absent(
                    invocation.output_key, bytes(result), link
                )
        except WrenletError as err:
            failure = err
        except Exception as err:
            failure = InvocationError(f"{type(err).__name__}: {err}")
            failure.__cause__ = err
        finally:
            guard.armed = False
            scratch.destroy()

        outcome = SUCCEEDED_OUTCOME if failure is None else type(failure).__name__
        if (
            invocation.status_key is not None
            and not isinstance(failure, InjectedCrash)
            and not invocation.future.abandoned
        ):
            status = {"outcome": outcome, "error": str(failure) if failure else None}
            try:
                with link.labelled("output"):
                    self.objects.object_put(
                        invocation.status_key, json.dumps(status).encode("utf-8"), link
                    )
            except WrenletError as err:
                logger.warning(f"could not write status {invocation.status_key}: {err}")
        report = InvocationReport(
            function_id=invocation.function_id,
            input_key=str(invocation.input_key),
            output_key=str(invocation.output_key),
            task=invocation.task,
            attempt=invocation.attempt,
            outcome=outcome,
            timestamp=self.clock.timestamp(),
            submitted_at=invocation.submitted_at,
            started_at=started_at,
            ended_at=self.clock.now(),
            start_latency=started_at - invocation.submitted_at,
            memory_limit=limits.max_memory,
            peak_memory=scratch.peak_memory,
            bytes_read=link.bytes_read,
            bytes_written=link.bytes_written,
            published=published,
            error=str(failure) if failure is not None else None,
            timings=dict(link.timings),
            failure=failure,
        )
        self._record(report)
        return report

    def _record(self, report: InvocationReport) -> None:
        if report.succeeded:
            logger.debug(f"{report.output_key} attempt {report.attempt} succeeded")
        else:
            logger.info(f"{report.output_key} attempt {report.attempt}: {report.outcome}")
        with self._lock:
            self._reports.append(report)
            if self._trace is not None:
                file_io, name = self._trace
                file_io.append_ndjson([report.to_dict()], name)
