import csv
import io
import json
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

from wrenlet.bench import COLUMNS
from wrenlet.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION, main, make_parser
from wrenlet.file.interface import FileIO


def invoke(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        status = main(argv)
    return status, out.getvalue(), err.getvalue()


class TestParser(unittest.TestCase):
    def test_lists_and_sizes(self):
        args = make_parser().parse_args(["sort", "--workers", "1,2,4", "--size", "1e6"])
        self.assertEqual([1, 2, 4], args.workers)
        self.assertEqual([1], args.shards)
        self.assertEqual(1_000_000, args.size)

    def test_usage_errors_exit_2(self):
        for argv in (["teleport"], ["sort", "--workers", "a,b"], ["sort", "--medium", "tape"]):
            with self.assertRaises(SystemExit) as raised, redirect_stderr(io.StringIO()):
                main(argv)
            self.assertEqual(EXIT_USAGE, raised.exception.code, argv)


class TestMain(unittest.TestCase):
    def setUp(self) -> None:
        self.path = tempfile.mkdtemp(prefix="wrenlet-cli-")

    def tearDown(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def test_prints_csv(self):
        status, out, _ = invoke(["bench-kv", "--workers", "0", "--profile", "desk-shaped"])
        self.assertEqual(EXIT_OK, status)
        self.assertEqual(",".join(COLUMNS["bench-kv"]) + "\n", out)

    def test_rows_on_stdout(self):
        status, out, _ = invoke(["bench-kv", "--workers", "1,2", "--profile", "desk-shaped"])
        self.assertEqual(EXIT_OK, status)
        lines = out.splitlines()
        self.assertEqual(3, len(lines))
        self.assertTrue(lines[1].startswith("1,1,"))
        self.assertTrue(lines[2].startswith("2,1,"))

    def test_writes_out_file(self):
        out_file = os.path.join(self.path, "results", "wc.csv")
        status, out, _ = invoke(
            ["wordcount", "--workers", "2", "--profile", "desk-shaped", "--out", out_file]
        )
        self.assertEqual(EXIT_OK, status)
        self.assertEqual("", out)
        with open(out_file, "r", encoding="utf-8") as file:
            (row,) = list(csv.DictReader(file))
        self.assertEqual("OK", row["verdict"])

    def test_invalid_sweep(self):
        status, _, _ = invoke(["bench-kv", "--workers", "4,2", "--profile", "desk-shaped"])
        self.assertEqual(EXIT_USAGE, status)

    def test_bad_config(self):
        missing = os.path.join(self.path, "absent.env")
        status, _, _ = invoke(["bench-kv", "--workers", "0", "--config", missing])
        self.assertEqual(EXIT_USAGE, status)
        config = os.path.join(self.path, "bad.env")
        with open(config, "w", encoding="utf-8") as file:
            file.write("WRENLET_KV_SHARDS=none\n")
        status, _, _ = invoke(["bench-kv", "--workers", "0", "--config", config])
        self.assertEqual(EXIT_USAGE, status)

    def test_verification_failure_exits_1(self):
        with mock.patch("wrenlet.bench.serial_word_count", return_value=b"wrong\t1\n"):
            status, _, _ = invoke(["wordcount", "--workers", "2", "--profile", "desk-shaped"])
        self.assertEqual(EXIT_VERIFICATION, status)

    def test_cost_requires_trace(self):
        status, _, err = invoke(["cost"])
        self.assertEqual(EXIT_USAGE, status)
        self.assertIn("--trace is required", err)

    def test_cost(self):
        FileIO(self.path).write_ndjson(
            [{"kind": "kv_activity", "shards": 2, "intervals": [[0, 3600]]}], "trace.ndjson"
        )
        trace = os.path.join(self.path, "trace.ndjson")
        status, out, _ = invoke(["cost", "--trace", trace])
        self.assertEqual(EXIT_OK, status)
        self.assertAlmostEqual(4.0, json.loads(out)["kv_cost"])
        report_file = os.path.join(self.path, "cost.json")
        status, _, _ = invoke(["cost", "--trace", trace, "--out", report_file])
        self.assertEqual(EXIT_OK, status)
        self.assertTrue(os.path.exists(report_file))

    def test_malformed_trace(self):
        FileIO(self.path).write_ndjson([{"kind": "mystery"}], "trace.ndjson")
        status, _, _ = invoke(["cost", "--trace", os.path.join(self.path, "trace.ndjson")])
        self.assertEqual(EXIT_USAGE, status)


if __name__ == "__main__":
    unittest.main()
