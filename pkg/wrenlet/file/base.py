"""Writers for benchmark tables, cost reports and traces; traces can be read back"""
from __future__ import annotations

import csv
import json
import logging
import os.path
from abc import ABC, abstractmethod
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

# ndjson missing types: https://github.com/rhgrant10/ndjson/issues/10
import ndjson  # type: ignore

from wrenlet.types import Record

logger = logging.getLogger(__name__)


class FileRWInterface(ABC):
    """Interface for writing lists of records"""

    def __init__(self, path: Path | str, name: str, encoding: str = "utf-8"):
        self.path = path
        self.filename = name
        self.encoding = encoding

    @property
    def filepath(self) -> str:
        """Absolute path of the file"""
        return os.path.join(self.path, self.filename)

    @abstractmethod
    def write(self, out_file: TextIO, data: List[Record]) -> None:
        """Writes `data` to `out_file`"""


class CSVFile(FileRWInterface):
    """
    Benchmark tables: one header row, then one row per record. With
    `columns` the header is written even when there are no records.
    """

    def __init__(
        self,
        path: Path | str,
        name: str,
        encoding: str = "utf-8",
        columns: Optional[Sequence[str]] = None,
    ):
        super().__init__(path, name, encoding)
        self.columns = list(columns) if columns is not None else None

    def write(self, out_file: TextIO, data: List[Record]) -> None:
        columns = self.columns or (list(data[0].keys()) if data else None)
        if columns is None:
            logger.warning("Writing an empty CSV file without headers")
            return
        writer = csv.DictWriter(out_file, columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(data)


class JSONFile(FileRWInterface):
    """A single JSON array of records"""

    def write(self, out_file: TextIO, data: List[Record]) -> None:
        out_file.write(json.dumps(data, indent=2, sort_keys=True))


class NDJSONFile(FileRWInterface):
    """
    One self-describing record per line. Records of different kinds may
    share a file, so every record must carry a "kind" field.
    """

    def load(self, file: TextIO) -> List[Record]:
        """Loads records from `file`"""
        return list(ndjson.reader(file))

    def write(self, out_file: TextIO, data: List[Record]) -> None:
        writer = ndjson.writer(out_file, ensure_ascii=False)
        for row in data:
            writer.writerow(row)

    def append(self, data: List[Record]) -> None:
        """Appends `data` to the end of the file"""
        for row in data:
            assert "kind" in row, f"record without kind: {tuple(row.keys())}"
        with open(self.filepath, "a", encoding=self.encoding) as out_file:
            self.write(out_file, data)
