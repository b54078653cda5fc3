import unittest

import numpy as np

from wrenlet.config import EngineConfig
from wrenlet.engine import Engine
from wrenlet.job import JobConfig
from wrenlet.models import GatherTooLarge, TaskFailed
from wrenlet.patterns.gather import featurize_and_fit, gather_reduce, serial_featurize_and_fit
from wrenlet.patterns.layout import Medium, ShuffleLayout
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.types import JobId


def square(payload, ctx):
    return str(int(payload) ** 2).encode()


def total(outputs):
    return str(sum(int(out) for out in outputs)).encode()


SQUARE = FunctionDescriptor("square", "1", square)


class TestGatherReduce(unittest.TestCase):
    def setUp(self) -> None:
        self.engine = Engine(
            EngineConfig(clock="virtual", pool_size=32), JobConfig(poll_interval=0.05)
        )
        self.function_id = self.engine.runtime.register_function(SQUARE)

    def tearDown(self) -> None:
        self.engine.close()

    def test_sum_of_squares(self):
        inputs = [str(i).encode() for i in range(1, 101)]
        result = gather_reduce(self.engine.driver, self.function_id, inputs, total)
        self.assertEqual(b"338350", result)

    def test_reduce_sees_input_order(self):
        inputs = [str(i).encode() for i in [5, 1, 3]]
        gathered = gather_reduce(self.engine.driver, self.function_id, inputs, b",".join)
        self.assertEqual(b"25,1,9", gathered)

    def test_memory_budget(self):
        inputs = [str(10**6 + i).encode() for i in range(10)]
        with self.assertRaises(GatherTooLarge):
            gather_reduce(self.engine.driver, self.function_id, inputs, total, memory_budget=50)

    def test_failures_propagate(self):
        with self.assertLogs(level="ERROR"):
            with self.assertRaises(TaskFailed):
                gather_reduce(
                    self.engine.driver,
                    self.function_id,
                    [b"1", b"not a number"],
                    total,
                    config=JobConfig(retry_limit=0, poll_interval=0.05),
                )

    def test_featurize_and_fit(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-3, 3, size=400)
        y = 0.5 - 2.0 * x + 0.25 * x**2 + 3.0 * np.sin(x) + rng.normal(0, 0.01, size=400)
        chunks = np.array_split(np.column_stack([x, y]), 8)
        weights = featurize_and_fit(self.engine.driver, chunks)
        np.testing.assert_allclose(serial_featurize_and_fit(chunks), weights, rtol=0, atol=1e-9)
        np.testing.assert_allclose([0.5, -2.0, 0.25, 3.0], weights, atol=0.01)


class TestShuffleLayout(unittest.TestCase):
    def setUp(self) -> None:
        self.layout = ShuffleLayout(JobId("j1"), map_tasks=2, reduce_tasks=3, medium=Medium.KV)

    def test_keys(self):
        self.assertEqual("jobs/j1/shuffle/1/2", str(self.layout.key(1, 2)))
        self.assertEqual(6, len(self.layout.keys()))
        self.assertTrue(all(str(k).startswith(self.layout.prefix) for k in self.layout.keys()))
        with self.assertRaises(IndexError):
            self.layout.key(2, 0)

    def test_dict_form(self):
        self.assertEqual(self.layout, ShuffleLayout.from_dict(self.layout.to_dict()))
        self.assertEqual("kv", self.layout.to_dict()["medium"])

    def test_invalid_shape(self):
        with self.assertRaises(ValueError):
            ShuffleLayout(JobId("j1"), map_tasks=1, reduce_tasks=0)


if __name__ == "__main__":
    unittest.main()
