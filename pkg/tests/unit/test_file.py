import csv
import json
import os
import shutil
import tempfile
import unittest

from wrenlet.file.base import CSVFile, JSONFile, NDJSONFile
from wrenlet.file.interface import FileIO

TEST_FILE = "test"


class TestFileIO(unittest.TestCase):
    def setUp(self) -> None:
        self.path = tempfile.mkdtemp(prefix="wrenlet-file-")
        self.records = [
            {"kind": "invocation", "task": "0", "outcome": "succeeded"},
            {"kind": "invocation", "task": "1", "outcome": "InjectedCrash"},
        ]
        self.file_manager = FileIO(self.path)
        self.file_writers = [
            CSVFile(self.path, TEST_FILE + ".csv"),
            NDJSONFile(self.path, TEST_FILE + ".ndjson"),
            JSONFile(self.path, TEST_FILE + ".json"),
        ]

    def tearDown(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def _read(self, name):
        with open(os.path.join(self.path, name), "r", encoding="utf-8") as file:
            return file.read()

    def test_ndjson_write_and_load(self):
        self.file_manager.write_ndjson(self.records, "trace.ndjson")
        self.assertEqual(self.records, self.file_manager.load_ndjson("trace.ndjson"))

    def test_csv_and_json_writers(self):
        self.file_manager.write_csv(self.records, "table.csv")
        with open(os.path.join(self.path, "table.csv"), "r", encoding="utf-8") as file:
            self.assertEqual(self.records, list(csv.DictReader(file)))
        self.file_manager.write_json(self.records, "report.json")
        self.assertEqual(self.records, json.loads(self._read("report.json")))

    def test_append_ok(self):
        self.file_manager.write_ndjson(self.records, "trace.ndjson")
        self.file_manager.append_ndjson(self.records, "trace.ndjson")
        self.assertEqual(self.records * 2, self.file_manager.load_ndjson("trace.ndjson"))

    def test_append_on_new_file_writes_it(self):
        self.file_manager.append_ndjson(self.records, "fresh.ndjson")
        self.assertEqual(self.records, self.file_manager.load_ndjson("fresh.ndjson"))

    def test_append_requires_kind(self):
        self.file_manager.write_ndjson(self.records, "trace.ndjson")
        with self.assertRaises(AssertionError):
            self.file_manager.append_ndjson([{"task": 3}], "trace.ndjson")
        self.assertEqual(self.records, self.file_manager.load_ndjson("trace.ndjson"))

    def test_skip_empty_write(self):
        for writer in self.file_writers:
            with self.assertLogs():
                self.file_manager._write([], writer, True)
            self.assertFalse(os.path.exists(writer.filepath))

    def test_empty_csv_without_columns_warns(self):
        writer = CSVFile(self.path, TEST_FILE + ".csv")
        with self.assertLogs(level="WARNING"):
            self.file_manager._write([], writer, False)
        self.assertEqual("", self._read(TEST_FILE + ".csv"))

    def test_empty_csv_with_columns_has_header(self):
        self.file_manager.write_csv([], "bench.csv", skip_empty=False, columns=["workers", "tps"])
        self.assertEqual("workers,tps\n", self._read("bench.csv"))

    def test_csv_columns_fix_order(self):
        self.file_manager.write_csv([{"b": 2, "a": 1}], "ordered.csv", columns=["a", "b"])
        self.assertEqual("a,b\n1,2\n", self._read("ordered.csv"))

    def test_idempotent_write(self):
        for writer in self.file_writers:
            self.file_manager._write(self.records, writer, True)
            first = self._read(writer.filename)
            self.file_manager._write(self.records, writer, True)
            self.assertEqual(first, self._read(writer.filename), f"rewrite changed {writer}")

    def test_for_file_creates_directory(self):
        target = os.path.join(self.path, "nested", "trace.ndjson")
        file_io, name = FileIO.for_file(target)
        self.assertEqual("trace.ndjson", name)
        file_io.append_ndjson(self.records[:1], name)
        self.assertEqual(self.records[:1], file_io.load_ndjson(name))


if __name__ == "__main__":
    unittest.main()
