"""File access for records: benchmark CSV, cost report JSON and NDJSON traces"""
from __future__ import annotations

import logging
import os.path
from os.path import exists
from pathlib import Path
from typing import List, Optional, Sequence

from wrenlet.file.base import FileRWInterface, CSVFile, JSONFile, NDJSONFile
from wrenlet.types import Record

logger = logging.getLogger(__name__)
logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s %(message)s")


class FileIO:
    """
    CSV holds benchmark tables (stable header, one row per run).
    JSON holds cost reports.
    NDJSON holds execution traces, one record appended per invocation.
    """

    def __init__(self, path: Path | str, encoding: str = "utf-8"):
        if not os.path.exists(path):
            logger.info(f"creating write path {path}")
            os.makedirs(path)
        self.path = path
        self.encoding: str = encoding

    def _write(self, data: List[Record], writer: FileRWInterface, skip_empty: bool) -> None:
        if skip_empty and len(data) == 0:
            logger.info(f"Nothing to write to {writer.filename}... skipping")
            return
        with open(writer.filepath, "w", encoding=self.encoding) as out_file:
            writer.write(out_file, data)

    def _append(self, data: List[Record], writer: NDJSONFile, skip_empty: bool) -> None:
        if skip_empty and len(data) == 0:
            logger.info(f"Nothing to write to {writer.filename}... skipping")
            return
        if not exists(writer.filepath):
            self._write(data, writer, skip_empty)
            return
        writer.append(data)

    def write_csv(
        self,
        data: List[Record],
        name: str,
        skip_empty: bool = True,
        columns: Optional[Sequence[str]] = None,
    ) -> None:
        """Writes `data` to csv file `name`, in `columns` order if given"""
        self._write(data, CSVFile(self.path, name, self.encoding, columns), skip_empty)

    def write_json(self, data: List[Record], name: str, skip_empty: bool = True) -> None:
        """Writes `data` to json file `name`"""
        self._write(data, JSONFile(self.path, name, self.encoding), skip_empty)

    def write_ndjson(self, data: List[Record], name: str, skip_empty: bool = True) -> None:
        """Writes `data` to ndjson file `name`"""
        self._write(data, NDJSONFile(self.path, name, self.encoding), skip_empty)

    def append_ndjson(self, data: List[Record], name: str, skip_empty: bool = True) -> None:
        """Appends `data` to ndjson file `name`"""
        self._append(data, NDJSONFile(self.path, name, self.encoding), skip_empty)

    def load_ndjson(self, name: str) -> List[Record]:
        """Loads records from ndjson file `name`"""
        reader = NDJSONFile(self.path, name, self.encoding)
        with open(reader.filepath, "r", encoding=self.encoding) as file:
            return reader.load(file)

    @classmethod
    def for_file(cls, filepath: Path | str) -> tuple[FileIO, str]:
        """FileIO of the directory holding `filepath`, plus the file name"""
        path = Path(filepath)
        return cls(path.parent), path.name
