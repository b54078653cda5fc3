import math
import os
import shutil
import tempfile
import unittest

from wrenlet.config import (
    EngineConfig,
    VIRTUAL,
    WALL,
    apply_overrides,
    load_config,
    profile,
)
from wrenlet.engine import Engine
from wrenlet.models import ConfigError
from wrenlet.runtime.limits import CrashPoint, ResourceLimits
from wrenlet.storage.base import FilesystemBackend, MemoryBackend
from wrenlet.storage.shaping import LatencyDistribution, ShapingProfile, VirtualClock, WallClock


class TestProfiles(unittest.TestCase):
    def test_desk(self):
        config = profile("desk")
        self.assertEqual(WALL, config.clock)
        self.assertFalse(config.shaping.object_shaped)
        self.assertEqual(ResourceLimits.desk(), config.limits)

    def test_desk_shaped(self):
        config = profile("desk-shaped")
        self.assertEqual(VIRTUAL, config.clock)
        self.assertEqual(ShapingProfile.lambda_2017(), config.shaping)
        self.assertEqual(0.0, config.cold_start.distribution.mean)

    def test_lambda_2017(self):
        config = profile("lambda-2017")
        self.assertEqual(300.0, config.limits.max_runtime)
        self.assertAlmostEqual(9.7, config.cold_start.distribution.mean)

    def test_unknown(self):
        with self.assertRaises(ConfigError):
            profile("mainframe")

    def test_validation(self):
        with self.assertRaises(ConfigError):
            EngineConfig(clock="sundial")
        with self.assertRaises(ConfigError):
            EngineConfig(backend="filesystem")
        with self.assertRaises(ConfigError):
            EngineConfig(kv_shards=0)
        with self.assertRaises(ConfigError):
            EngineConfig(pool_size=0)

    def test_replace(self):
        config = profile("desk").replace(pool_size=3, seed=9)
        self.assertEqual((3, 9), (config.pool_size, config.seed))
        self.assertEqual("desk", config.profile)


class TestOverrides(unittest.TestCase):
    def setUp(self) -> None:
        self.path = tempfile.mkdtemp(prefix="wrenlet-config-")

    def tearDown(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def _write(self, name, text):
        filepath = os.path.join(self.path, name)
        with open(filepath, "w", encoding="utf-8") as file:
            file.write(text)
        return filepath

    def test_defaults_to_desk(self):
        self.assertEqual(profile("desk"), load_config(environ={}))

    def test_environment(self):
        config = load_config(
            environ={
                "WRENLET_PROFILE": "desk-shaped",
                "WRENLET_KV_SHARDS": "4",
                "WRENLET_WRITE_BW": "unlimited",
                "WRENLET_COLD_START": "fixed:0.5",
                "WRENLET_CRASH_POINT": "mid-run",
                "WRENLET_MAX_MEMORY": "1e9",
                "HOME": "/root",
            }
        )
        self.assertEqual("desk-shaped", config.profile)
        self.assertEqual(4, config.kv_shards)
        self.assertTrue(math.isinf(config.shaping.per_client_write_bw))
        self.assertEqual(40e6, config.shaping.per_client_read_bw)
        self.assertEqual(LatencyDistribution.fixed(0.5), config.cold_start.distribution)
        self.assertEqual(CrashPoint.MID_RUN, config.fault_plan.crash_point)
        self.assertEqual(1_000_000_000, config.limits.max_memory)

    def test_file_overrides_environment(self):
        filepath = self._write(
            "bench.env",
            "WRENLET_PROFILE=lambda-2017\nWRENLET_KV_SHARDS=8\nWRENLET_OP_LATENCY=fixed:0.05\n",
        )
        config = load_config(filepath, environ={"WRENLET_KV_SHARDS": "2"})
        self.assertEqual("lambda-2017", config.profile)
        self.assertEqual(8, config.kv_shards)
        self.assertEqual(LatencyDistribution.fixed(0.05), config.shaping.op_latency)

    def test_config_named_by_environment(self):
        filepath = self._write("named.env", "WRENLET_SEED=42\n")
        config = load_config(environ={"WRENLET_CONFIG": filepath})
        self.assertEqual(42, config.seed)

    def test_profile_argument_wins(self):
        filepath = self._write("p.env", "WRENLET_PROFILE=lambda-2017\n")
        self.assertEqual("desk", load_config(filepath, "desk", environ={}).profile)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.path, "absent.env"), environ={})

    def test_bad_values(self):
        for key, value in [
            ("WRENLET_KV_SHARDS", "many"),
            ("WRENLET_READ_BW", "-5"),
            ("WRENLET_OP_LATENCY", "gaussian:1"),
            ("WRENLET_CRASH_POINT", "sometime"),
            ("WRENLET_CRASH_PROBABILITY", "2"),
            ("WRENLET_CLOCK", "sundial"),
        ]:
            with self.assertRaises(ConfigError, msg=key):
                apply_overrides(profile("desk"), {key: value})

    def test_unknown_setting_warns(self):
        with self.assertLogs("wrenlet.config", level="WARNING"):
            config = apply_overrides(profile("desk"), {"WRENLET_TURBO": "1"})
        self.assertEqual(profile("desk"), config)


class TestEngineWiring(unittest.TestCase):
    def setUp(self) -> None:
        self.path = tempfile.mkdtemp(prefix="wrenlet-engine-")

    def tearDown(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def test_wiring(self):
        with Engine(profile("desk-shaped").replace(kv_shards=3, pool_size=5)) as engine:
            self.assertIsInstance(engine.clock, VirtualClock)
            self.assertIsInstance(engine.objects.backend, MemoryBackend)
            self.assertEqual(3, engine.kv.shards)
            self.assertEqual(5, engine.runtime.pool_size)
            self.assertIs(engine.clock, engine.driver.clock)
        with Engine() as engine:
            self.assertIsInstance(engine.clock, WallClock)

    def test_filesystem_backend(self):
        config = profile("desk").replace(backend="filesystem", root=self.path)
        with Engine(config) as engine:
            self.assertIsInstance(engine.objects.backend, FilesystemBackend)
            engine.objects.object_put("data/x", b"persisted")
        with Engine(config) as engine:
            self.assertEqual(b"persisted", engine.objects.object_get("data/x"))


if __name__ == "__main__":
    unittest.main()
