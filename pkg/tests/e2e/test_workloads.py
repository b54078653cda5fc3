"""
Full-size runs of the engine and its patterns. These take minutes rather
than seconds; shaped runs are on virtual time so the timings they assert
do not depend on the machine.
"""
import os
import unittest

from wrenlet.bench import BenchSpec, run
from wrenlet.config import EngineConfig, profile
from wrenlet.engine import Engine
from wrenlet.job import JobConfig
from wrenlet.patterns.layout import Medium
from wrenlet.patterns.sort import (
    RECORD_SIZE,
    checksum,
    generate_records,
    is_sorted,
    put_records,
    read_output,
    terasort,
)
from wrenlet.runtime.limits import FaultPlan, ResourceLimits
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.storage.shaping import LatencyDistribution, ShapingProfile

SORT_BYTES = 100 << 20


def double(payload, ctx):
    return str(2 * int(payload)).encode()


def busy(payload, ctx):
    ctx.charge_compute(0.2)
    return payload


DOUBLE = FunctionDescriptor("double", "1", double)
BUSY = FunctionDescriptor("busy", "1", busy)


class TestMapUnderFaults(unittest.TestCase):
    def _chaos_map(self, pool_size):
        limits = ResourceLimits(max_runtime=5.0)
        config = EngineConfig(clock="virtual", pool_size=pool_size, limits=limits)
        with Engine(config, JobConfig(retry_limit=8, poll_interval=0.1, limits=limits)) as engine:
            engine.runtime.set_fault_plan(FaultPlan(crash_probability=0.2, seed=11))
            function_id = engine.runtime.ensure_registered(DOUBLE)
            futures = engine.driver.map(function_id, [str(i).encode() for i in range(1000)])
            return futures, engine.driver.results(futures), engine.runtime.reports

    def test_exactly_one_result_per_task(self):
        futures, results, reports = self._chaos_map(64)
        self.assertEqual([str(2 * i).encode() for i in range(1000)], results)
        published = [r for r in reports if r.published]
        self.assertEqual(1000, len(published))
        self.assertEqual(1000, len({r.output_key for r in published}))
        crashed = [r for r in reports if r.outcome == "InjectedCrash"]
        # About p / (1 - p) crashes per task, since attempts crash independently.
        self.assertAlmostEqual(250, len(crashed), delta=50)
        self.assertTrue(any(f.attempts >= 3 for f in futures))

    def test_same_output_for_any_pool(self):
        first, first_results, first_reports = self._chaos_map(64)
        second, second_results, second_reports = self._chaos_map(16)
        self.assertEqual(first_results, second_results)
        self.assertEqual([f.attempts for f in first], [f.attempts for f in second])

        def crashes(reports):
            return sorted((r.output_key.rsplit("/", 1)[1], r.attempt) for r in reports
                          if r.outcome == "InjectedCrash")

        self.assertEqual(crashes(first_reports), crashes(second_reports))

    def test_pool_absorbs_a_burst(self):
        config = EngineConfig(clock="virtual", pool_size=128)
        with Engine(config, JobConfig(poll_interval=0.1)) as engine:
            function_id = engine.runtime.ensure_registered(BUSY)
            started = engine.clock.now()
            engine.driver.results(engine.driver.map(function_id, [b"x"] * 128))
            elapsed = engine.clock.now() - started
        self.assertLessEqual(elapsed, 0.2 + 5 * 0.1 + 0.5)


class TestTerasort(unittest.TestCase):
    def setUp(self) -> None:
        self.data = generate_records(SORT_BYTES // RECORD_SIZE, seed=1)
        self.expected = checksum(self.data)

    def _sort(self, engine, **kwargs):
        keys = put_records(engine.driver, self.data, 16)
        outputs = terasort(engine.driver, keys, 16, **kwargs)
        return read_output(engine.driver, outputs)

    def _check(self, result):
        self.assertEqual(len(self.data), len(result))
        self.assertEqual(self.expected, checksum(result))
        self.assertTrue(is_sorted(result))

    def test_object_medium_keeps_every_fragment(self):
        config = EngineConfig(clock="virtual", pool_size=16)
        with Engine(config, JobConfig(poll_interval=0.1)) as engine:
            self._check(self._sort(engine, medium=Medium.OBJECT, keep_intermediates=True))
            shuffle = [k for k in engine.objects.object_list("jobs/") if "/shuffle/" in str(k)]
            self.assertEqual(256, len(shuffle))
            sizes = [len(engine.objects.object_get(k)) for k in shuffle]
            self.assertLess(max(sizes), 512 * 1024)

    def test_kv_medium_under_faults(self):
        config = EngineConfig(clock="virtual", pool_size=16)
        with Engine(config, JobConfig(retry_limit=8, poll_interval=0.1)) as engine:
            clean = self._sort(engine, medium=Medium.KV)
        self._check(clean)
        with Engine(config, JobConfig(retry_limit=8, poll_interval=0.1)) as engine:
            engine.runtime.set_fault_plan(FaultPlan(crash_probability=0.2, seed=2))
            chaos = self._sort(engine, medium=Medium.KV)
            self.assertTrue(any(r.outcome == "InjectedCrash" for r in engine.runtime.reports))
        self.assertEqual(clean, chaos)


class TestBenchmarkShapes(unittest.TestCase):
    def setUp(self) -> None:
        self.base = profile("desk-shaped")

    def test_storage_scales_with_workers(self):
        single, many = run(BenchSpec("bench-storage", workers=[1, 10]), self.base)
        self.assertAlmostEqual(29.5, single["write_mbps"], delta=1.5)
        self.assertAlmostEqual(39.0, single["read_mbps"], delta=2.0)
        self.assertAlmostEqual(295.0, many["write_mbps"], delta=10.0)
        self.assertAlmostEqual(390.0, many["read_mbps"], delta=10.0)

    def test_storage_aggregate_cap(self):
        shaping = ShapingProfile(
            op_latency=LatencyDistribution.fixed(0.001),
            aggregate_bw_cap=1e9,
            transfer_part=64 << 10,
        )
        base = self.base.replace(shaping=shaping)
        (row,) = run(BenchSpec("bench-storage", workers=[100], payload_size=2 << 20), base)
        # Parts interleave, so every writer finishes near the end of the shared transfer.
        self.assertAlmostEqual(1000.0, row["write_mbps"], delta=50.0)

    def test_kv_shards(self):
        rows = run(BenchSpec("bench-kv", workers=[1, 10], shards=[1, 4]), self.base)
        rate = {(r["workers"], r["shards"]): r["aggregate_tps"] for r in rows}
        self.assertAlmostEqual(700.0, rate[1, 1], delta=5.0)
        self.assertAlmostEqual(3500.0, rate[10, 1], delta=50.0)
        self.assertGreater(rate[10, 4], 6000.0)

    def test_sort_sweep(self):
        rows = run(BenchSpec("sort", workers=[4, 8, 16], shards=[1, 2, 4]), self.base)
        self.assertTrue(all(row["verdict"] == "OK" for row in rows))
        times = {(row["shards"], row["workers"]): row["wall_time"] for row in rows}
        one = [times[1, w] for w in (4, 8, 16)]
        self.assertGreater(one[0] / one[1], 1.7)
        self.assertLess(one[0] / one[1], 2.3)
        # A single shard flattens the curve once 16 workers share it.
        self.assertLess(one[1] - one[2], 0.5 * (one[0] - one[1]))
        for shards in (2, 4):
            curve = [times[shards, w] for w in (4, 8, 16)]
            self.assertLess(curve[1], curve[0], shards)
            self.assertLess(curve[2], curve[1], shards)
        self.assertLess(times[4, 16], times[1, 16])

    def test_many_partition_word_count(self):
        spec = BenchSpec("wordcount", workers=[64], partitions=333, payload_size=333 * 3000)
        (row,) = run(spec, self.base)
        self.assertEqual("OK", row["verdict"])
        self.assertEqual(333, row["partitions"])

    @unittest.skipIf((os.cpu_count() or 1) < 2, "needs at least two cores")
    def test_compute_on_real_time(self):
        single, double_row = run(BenchSpec("bench-compute", workers=[1, 2]), profile("desk"))
        self.assertGreater(single["aggregate_gflops"], 0.0)
        self.assertGreaterEqual(double_row["aggregate_gflops"], 0.8 * single["aggregate_gflops"])


if __name__ == "__main__":
    unittest.main()
