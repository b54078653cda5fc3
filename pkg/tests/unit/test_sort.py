import unittest

import numpy as np

from wrenlet.config import EngineConfig
from wrenlet.engine import Engine
from wrenlet.job import JobConfig
from wrenlet.models import IntermediateTooLarge, TooFewSamples
from wrenlet.patterns.layout import Medium
from wrenlet.patterns.sort import (
    KEY_SIZE,
    RECORD_SIZE,
    RangePartition,
    as_records,
    checksum,
    decode_fragment,
    encode_fragment,
    generate_records,
    is_sorted,
    put_records,
    read_output,
    sample_boundaries,
    serial_sort,
    terasort,
)


class TestRangePartition(unittest.TestCase):
    def setUp(self) -> None:
        self.ranges = RangePartition.of([b"c", b"f", b"f", b"m"])

    def test_partition_of(self):
        self.assertEqual(5, self.ranges.partitions)
        self.assertEqual(0, self.ranges.partition_of(b"a"))
        self.assertEqual(0, self.ranges.partition_of(b"c"))
        self.assertEqual(1, self.ranges.partition_of(b"d"))
        self.assertEqual(1, self.ranges.partition_of(b"f"))
        self.assertEqual(3, self.ranges.partition_of(b"g"))
        self.assertEqual(4, self.ranges.partition_of(b"z"))
        self.assertEqual(0, RangePartition(()).partition_of(b"z"))

    def test_partition_indices(self):
        keys = np.array([b"a", b"c", b"d", b"z"], dtype=f"S{KEY_SIZE}")
        self.assertEqual([0, 0, 1, 4], self.ranges.partition_indices(keys).tolist())
        self.assertEqual([0, 0], RangePartition(()).partition_indices(keys[:2]).tolist())

    def test_degenerate(self):
        self.assertTrue(self.ranges.degenerate)
        self.assertFalse(RangePartition.of([b"a", b"b"]).degenerate)

    def test_validation(self):
        with self.assertRaises(ValueError):
            RangePartition.of([b"b", b"a"])
        with self.assertRaises(ValueError):
            RangePartition.of([b"x" * (KEY_SIZE + 1)])

    def test_list_form(self):
        self.assertEqual(["63", "66", "66", "6d"], self.ranges.to_list())
        self.assertEqual(self.ranges, RangePartition.from_list(self.ranges.to_list()))


class TestRecords(unittest.TestCase):
    def test_generate(self):
        data = generate_records(500, seed=1)
        self.assertEqual(500 * RECORD_SIZE, len(data))
        self.assertEqual(data, generate_records(500, seed=1))
        self.assertNotEqual(data, generate_records(500, seed=2))
        self.assertEqual(b"", generate_records(0))

    def test_skew(self):
        keys = as_records(generate_records(10_000, seed=1, skew=0.5))["key"]
        _, counts = np.unique(keys, return_counts=True)
        hot = counts[counts > 1].sum()
        self.assertAlmostEqual(0.5, hot / 10_000, delta=0.03)
        with self.assertRaises(ValueError):
            generate_records(10, skew=1.5)

    def test_as_records(self):
        with self.assertRaises(ValueError):
            as_records(b"x" * (RECORD_SIZE + 1))
        self.assertEqual(0, len(as_records(b"")))

    def test_fragments(self):
        records = as_records(generate_records(20, seed=3))
        for compress in (False, True):
            decoded = decode_fragment(encode_fragment(records, compress), compress)
            self.assertEqual(records.tobytes(), decoded.tobytes())
        truncated = encode_fragment(records)[:-RECORD_SIZE]
        with self.assertRaises(ValueError):
            decode_fragment(truncated)

    def test_checksum(self):
        data = generate_records(3000, seed=4)
        reversed_data = as_records(data)[::-1].tobytes()
        self.assertEqual(checksum(data), checksum(reversed_data))
        self.assertEqual(checksum(data), checksum(serial_sort(data)))
        changed = bytearray(data)
        changed[-1] ^= 1
        self.assertNotEqual(checksum(data), checksum(bytes(changed)))
        self.assertEqual(0, checksum(b""))

    def test_serial_sort(self):
        data = generate_records(1000, seed=5)
        ordered = serial_sort(data)
        self.assertTrue(is_sorted(ordered))
        self.assertFalse(is_sorted(data))
        self.assertEqual(ordered, serial_sort(ordered))


class TestTerasort(unittest.TestCase):
    def setUp(self) -> None:
        self.engine = Engine(
            EngineConfig(clock="virtual", pool_size=16),
            JobConfig(poll_interval=0.05),
        )
        self.driver = self.engine.driver

    def tearDown(self) -> None:
        self.engine.close()

    def _sort(self, data, pieces, partitions, **kwargs):
        keys = put_records(self.driver, data, pieces)
        outputs = terasort(self.driver, keys, partitions, **kwargs)
        return outputs, read_output(self.driver, outputs)

    def _fragments(self):
        return [k for k in self.engine.objects.object_list("jobs/") if "/shuffle/" in str(k)]

    def test_matches_serial_sort(self):
        data = generate_records(1000, seed=6)
        outputs, result = self._sort(data, 4, 4, sample_rate=0.1, keep_intermediates=True)
        self.assertEqual(4, len(outputs))
        self.assertEqual(serial_sort(data), result)
        self.assertEqual(16, len(self._fragments()))

    def test_intermediates_dropped(self):
        data = generate_records(1000, seed=6)
        self._sort(data, 4, 4, sample_rate=0.1)
        self.assertEqual([], self._fragments())
        self._sort(data, 4, 4, sample_rate=0.1, medium=Medium.KV)
        self.assertEqual([], self.engine.kv.backend.list(""))

    def test_kv_medium_and_compression(self):
        data = generate_records(2000, seed=7)
        for medium in Medium:
            for compress in (False, True):
                _, result = self._sort(
                    data, 3, 5, medium=medium, compress=compress, sample_rate=0.1
                )
                self.assertEqual(serial_sort(data), result, f"{medium} compress={compress}")

    def test_sorted_input_is_unchanged(self):
        data = serial_sort(generate_records(800, seed=8))
        _, result = self._sort(data, 2, 4, sample_rate=0.2)
        self.assertEqual(data, result)

    def test_single_partition(self):
        data = generate_records(300, seed=9)
        outputs, result = self._sort(data, 3, 1)
        self.assertEqual(1, len(outputs))
        self.assertEqual(serial_sort(data), result)

    def test_uniform_keys_are_balanced(self):
        data = generate_records(100_000, seed=10)
        outputs, result = self._sort(data, 4, 8, sample_rate=0.1)
        self.assertEqual(checksum(data), checksum(result))
        self.assertTrue(is_sorted(result))
        sizes = [len(self.engine.objects.object_get(k)) // RECORD_SIZE for k in outputs]
        for size in sizes:
            self.assertAlmostEqual(100_000 / 8, size, delta=0.2 * 100_000 / 8)

    def test_identical_keys_land_in_partition_zero(self):
        records = np.zeros(400, dtype=[("key", f"S{KEY_SIZE}"), ("value", "V90")])
        records["key"] = b"samekey123"
        data = records.tobytes()
        with self.assertLogs("wrenlet.patterns.sort", level="WARNING"):
            outputs, result = self._sort(data, 2, 4, sample_rate=0.1)
        sizes = [len(self.engine.objects.object_get(k)) for k in outputs]
        self.assertEqual([len(data), 0, 0, 0], sizes)
        self.assertEqual(data, result)

    def test_skewed_keys(self):
        data = generate_records(5000, seed=11, skew=0.3)
        _, result = self._sort(data, 4, 6, sample_rate=0.1)
        self.assertEqual(serial_sort(data), result)

    def test_fragment_too_large_for_kv(self):
        engine = Engine(
            EngineConfig(clock="virtual", pool_size=4, kv_value_cap=4096),
            JobConfig(retry_limit=0, poll_interval=0.05),
        )
        try:
            keys = put_records(engine.driver, generate_records(1000, seed=12), 1)
            with self.assertRaises(IntermediateTooLarge):
                terasort(engine.driver, keys, 2, medium=Medium.KV, sample_rate=0.1)
            self.assertEqual([], engine.kv.backend.list(""))
        finally:
            engine.close()

    def test_too_few_samples(self):
        keys = put_records(self.driver, generate_records(10, seed=13), 1)
        with self.assertRaises(TooFewSamples):
            terasort(self.driver, keys, 4, sample_rate=0.1)

    def test_invalid_arguments(self):
        keys = put_records(self.driver, generate_records(10, seed=13), 1)
        with self.assertRaises(ValueError):
            sample_boundaries(self.driver, keys, 0)
        with self.assertRaises(ValueError):
            sample_boundaries(self.driver, keys, 2, sample_rate=0)
        with self.assertRaises(ValueError):
            put_records(self.driver, b"", 0)

    def test_boundaries_are_reproducible(self):
        keys = put_records(self.driver, generate_records(4000, seed=14), 4)
        first = sample_boundaries(self.driver, keys, 8, sample_rate=0.05, seed=1)
        second = sample_boundaries(self.driver, keys, 8, sample_rate=0.05, seed=1)
        self.assertEqual(first, second)
        self.assertEqual(8, first.partitions)


if __name__ == "__main__":
    unittest.main()
