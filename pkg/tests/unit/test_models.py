import unittest
from datetime import datetime, timezone

from wrenlet.models import (
    InjectedCrash,
    InvocationError,
    InvocationReport,
    IntermediateTooLarge,
    MalformedTrace,
    TaskState,
    TimeLimitExceeded,
    ValueTooLarge,
    error_class,
)


class TestInvocationReport(unittest.TestCase):
    def setUp(self) -> None:
        self.trace_record = {
            "kind": "invocation",
            "function_id": "wordcount-map:1",
            "input_key": "jobs/j1/input/3",
            "output_key": "jobs/j1/result/3",
            "task": 3,
            "attempt": 1,
            "outcome": "succeeded",
            "error": None,
            "timestamp": "2017-01-01T00:00:01.250000+00:00",
            "submitted_at": 1.0,
            "started_at": 1.25,
            "ended_at": 1.75,
            "start_latency": 0.25,
            "run_duration": 0.5,
            "billed_duration": 0.5,
            "memory_limit": 1536 * 2**20,
            "peak_memory": 4096,
            "bytes_read": 100,
            "bytes_written": 20,
            "published": True,
            "timings": {"input": 0.125, "compute": 0.375},
        }
        self.report = InvocationReport(
            function_id="wordcount-map:1",
            input_key="jobs/j1/input/3",
            output_key="jobs/j1/result/3",
            task=3,
            attempt=1,
            outcome="succeeded",
            timestamp=datetime(2017, 1, 1, 0, 0, 1, 250000, tzinfo=timezone.utc),
            submitted_at=1.0,
            started_at=1.25,
            ended_at=1.75,
            start_latency=0.25,
            memory_limit=1536 * 2**20,
            peak_memory=4096,
            bytes_read=100,
            bytes_written=20,
            published=True,
            timings={"input": 0.125, "compute": 0.375},
        )

    def test_from_dict(self):
        self.assertEqual(self.report, InvocationReport.from_dict(self.trace_record))

    def test_to_dict(self):
        self.assertEqual(self.trace_record, self.report.to_dict())

    def test_durations(self):
        self.assertTrue(self.report.succeeded)
        self.assertEqual(0.5, self.report.run_duration)
        self.assertEqual(0.5, self.report.billed_duration)

    def test_malformed(self):
        del self.trace_record["started_at"]
        with self.assertLogs(level="ERROR"):
            with self.assertRaises(MalformedTrace):
                InvocationReport.from_dict(self.trace_record)

    def test_malformed_value(self):
        self.trace_record["memory_limit"] = "lots"
        with self.assertLogs(level="ERROR"):
            with self.assertRaises(MalformedTrace):
                InvocationReport.from_dict(self.trace_record)

    def test_raise_for_outcome(self):
        self.report.raise_for_outcome()
        self.report.outcome = "TimeLimitExceeded"
        self.report.error = "deadline 10.000s passed"
        with self.assertRaises(TimeLimitExceeded) as err:
            self.report.raise_for_outcome()
        self.assertEqual("deadline 10.000s passed", str(err.exception))

    def test_raise_for_outcome_prefers_captured_failure(self):
        failure = InjectedCrash("injected crash (before start)")
        self.report.outcome = "InjectedCrash"
        self.report.failure = failure
        with self.assertRaises(InjectedCrash) as err:
            self.report.raise_for_outcome()
        self.assertIs(failure, err.exception)


class TestErrorClass(unittest.TestCase):
    def test_lookup(self):
        self.assertIs(TimeLimitExceeded, error_class("TimeLimitExceeded"))
        self.assertIs(IntermediateTooLarge, error_class("IntermediateTooLarge"))
        self.assertIs(ValueTooLarge, error_class("ValueTooLarge"))

    def test_unknown_falls_back(self):
        self.assertIs(InvocationError, error_class("ZeroDivisionError"))


class TestTaskState(unittest.TestCase):
    def test_terminal(self):
        self.assertEqual({TaskState.SUCCEEDED, TaskState.FAILED}, TaskState.terminal_states())
        self.assertTrue(TaskState.FAILED.is_terminal())
        self.assertFalse(TaskState.RUNNING.is_terminal())
        self.assertFalse(TaskState.PENDING.is_terminal())


if __name__ == "__main__":
    unittest.main()
