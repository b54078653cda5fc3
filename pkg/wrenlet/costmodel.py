"""
Dollar cost of a job from its execution trace: functions are billed per
GB of memory and per started billing increment, key-value shards per
second (or per started hour) of activity.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from wrenlet.file.interface import FileIO
from wrenlet.models import InvocationReport, MalformedTrace
from wrenlet.storage.shaping import merge_intervals
from wrenlet.types import Record

logger = logging.getLogger(__name__)

GB = float(1 << 30)
HOUR = 3600.0


@dataclass(frozen=True)
class PriceBook:
    """
    fn_price: dollars per GB-hour of function execution
    billing_increment: durations are rounded up to a multiple of this
    kv_shard_price: dollars per shard-hour
    request_price: dollars per invocation request
    """

    fn_price: float = 0.06
    billing_increment: float = 0.1
    kv_shard_price: float = 2.0
    prorate_kv_to_seconds: bool = True
    request_price: float = 0.0

    def __post_init__(self) -> None:
        if min(self.fn_price, self.kv_shard_price, self.request_price) < 0:
            raise ValueError("prices must be nonnegative")
        if not self.billing_increment > 0:
            raise ValueError(f"billing increment must be positive, got {self.billing_increment}")


def billed_units(duration: float, book: PriceBook) -> int:
    """Started billing increments in `duration` seconds"""
    # Rounding first keeps 0.3 / 0.1 == 2.9999999999999996 at three increments.
    return math.ceil(round(duration / book.billing_increment, 9))


def bill_invocation(duration: float, memory: int, book: PriceBook = PriceBook()) -> float:
    """Dollars for one invocation of `duration` seconds with `memory` bytes"""
    if duration < 0 or memory <= 0:
        raise ValueError(f"cannot bill {duration}s at {memory} bytes")
    billed = billed_units(duration, book) * book.billing_increment
    return billed * (memory / GB) * book.fn_price / HOUR + book.request_price


def bill_kv(shards: int, active_span: float, book: PriceBook = PriceBook()) -> float:
    """Dollars for `shards` shards kept for `active_span` seconds"""
    if shards < 0 or active_span < 0:
        raise ValueError(f"cannot bill {shards} shards for {active_span}s")
    if book.prorate_kv_to_seconds:
        hours = active_span / HOUR
    else:
        hours = math.ceil(round(active_span / HOUR, 9))
    return shards * hours * book.kv_shard_price


@dataclass(frozen=True)
class CostReport:
    """Cost of one trace"""

    fn_cost: float = 0.0
    kv_cost: float = 0.0
    total: float = 0.0
    billed_gb_seconds: float = 0.0
    wall_time: float = 0.0
    invocations: int = 0
    failed_invocations: int = 0

    def to_dict(self) -> Record:
        """Flat form for JSON reports and CSV rows"""
        return {
            "fn_cost": self.fn_cost,
            "kv_cost": self.kv_cost,
            "total": self.total,
            "billed_gb_seconds": self.billed_gb_seconds,
            "wall_time": self.wall_time,
            "invocations": self.invocations,
            "failed_invocations": self.failed_invocations,
        }


def _kv_spans(records: Sequence[Record]) -> Dict[int, float]:
    intervals: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
    for record in records:
        try:
            shards = int(record["shards"])
            pairs = [(float(start), float(end)) for start, end in record["intervals"]]
        except (KeyError, TypeError, ValueError) as err:
            raise MalformedTrace(f"bad kv activity record: {err!r}") from err
        if shards < 0 or any(end < start for start, end in pairs):
            raise MalformedTrace(f"bad kv activity record: {shards} shards, {pairs[:3]}")
        intervals[shards].extend(pairs)
    return {
        shards: sum(end - start for start, end in merge_intervals(sorted(spans)))
        for shards, spans in intervals.items()
    }


def job_cost(trace: Sequence[Record], book: PriceBook = PriceBook()) -> CostReport:
    """
    Bills every invocation record of `trace` (failed and retried attempts
    included) plus the union of key-value activity per shard count.
    """
    reports: List[InvocationReport] = []
    kv_records: List[Record] = []
    for record in trace:
        kind = record.get("kind") if isinstance(record, dict) else None
        if kind == "invocation":
            reports.append(InvocationReport.from_dict(record))
        elif kind == "kv_activity":
            kv_records.append(record)
        else:
            raise MalformedTrace(f"unknown trace record kind {kind!r}")

    fn_cost = 0.0
    gb_seconds = 0.0
    for report in reports:
        if report.ended_at < report.started_at or report.memory_limit <= 0:
            raise MalformedTrace(f"invocation {report.output_key} has impossible timings")
        fn_cost += bill_invocation(report.billed_duration, report.memory_limit, book)
        billed = billed_units(report.billed_duration, book) * book.billing_increment
        gb_seconds += billed * report.memory_limit / GB
    kv_cost = sum(bill_kv(shards, span, book) for shards, span in _kv_spans(kv_records).items())

    wall_time = 0.0
    if reports:
        wall_time = max(r.ended_at for r in reports) - min(r.submitted_at for r in reports)
    failed = sum(1 for r in reports if not r.succeeded)
    logger.debug(f"costed {len(reports)} invocations ({failed} failed): ${fn_cost + kv_cost:.6g}")
    return CostReport(
        fn_cost=fn_cost,
        kv_cost=kv_cost,
        total=fn_cost + kv_cost,
        billed_gb_seconds=gb_seconds,
        wall_time=wall_time,
        invocations=len(reports),
        failed_invocations=failed,
    )


def load_trace(filepath: Path | str) -> List[Record]:
    """Records of an NDJSON trace file"""
    file_io, name = FileIO.for_file(filepath)
    try:
        return file_io.load_ndjson(name)
    except ValueError as err:
        raise MalformedTrace(f"{filepath} is not newline-delimited JSON: {err}") from err


def write_report(report: CostReport, filepath: Path | str) -> None:
    """Writes `report` as a JSON document"""
    file_io, name = FileIO.for_file(filepath)
    file_io.write_json([report.to_dict()], name)
