"""
Benchmarks behind the command line: compute, object store and key-value
microbenchmarks plus word count and sort sweeps. Every command returns
its rows as records with a fixed column set; shaped profiles run on
virtual time and give byte-identical output for a given seed.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from wrenlet.config import EngineConfig, profile
from wrenlet.costmodel import PriceBook, job_cost
from wrenlet.driver import Driver
from wrenlet.engine import Engine
from wrenlet.file.interface import FileIO
from wrenlet.job import JobConfig
from wrenlet.models import InvocationReport, VerificationFailed
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
from wrenlet.patterns.wordcount import (
    generate_corpus,
    put_corpus,
    serial_word_count,
    word_count,
)
from wrenlet.runtime.context import InvocationContext
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.types import Record

logger = logging.getLogger(__name__)
logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s %(message)s")

COMMANDS = ("bench-compute", "bench-storage", "bench-kv", "wordcount", "sort", "cost")

POLL_INTERVAL = 0.01
MB = 1e6
MATRIX_SIZE = 256
MATRIX_REPEATS = 20
STORAGE_PAYLOAD = 32 << 20
KV_VALUE_SIZE = 128
KV_OPS_PER_WORKER = 700
SORT_SIZE = 100 << 20
SORT_PARTITIONS = 16
WORDCOUNT_PARTITIONS = 8
WORDCOUNT_REDUCERS = 4
BREAKDOWN = ("start", "input", "shuffle", "compute", "output")
TINY_CORPUS = Path(__file__).parent / "data" / "tiny_corpus.txt"

COLUMNS: Dict[str, List[str]] = {
    "bench-compute": ["workers", "aggregate_gflops", "per_worker_gflops"],
    "bench-storage": [
        "workers",
        "write_mbps",
        "read_mbps",
        "worker_write_mbps_min",
        "worker_write_mbps_p50",
        "worker_write_mbps_max",
        "worker_read_mbps_min",
        "worker_read_mbps_p50",
        "worker_read_mbps_max",
    ],
    "bench-kv": [
        "workers",
        "shards",
        "aggregate_tps",
        "per_worker_tps",
        "latency_p50_ms",
        "latency_p99_ms",
    ],
    "wordcount": [
        "workers",
        "shards",
        "partitions",
        "reducers",
        "medium",
        "wall_time",
        "words",
        "fn_cost",
        "kv_cost",
        "total_cost",
        "verdict",
    ],
    "sort": [
        "workers",
        "shards",
        "partitions",
        "medium",
        "records",
        "wall_time",
        *BREAKDOWN,
        "fn_cost",
        "kv_cost",
        "total_cost",
        "verdict",
    ],
}


# pylint: disable=too-many-instance-attributes
@dataclass
class BenchSpec:
    """
    One command line invocation. `workers` and `shards` are sweeps; a
    workers value of 0 produces no row. `payload_size` defaults per
    command (storage payload, sort input bytes, word count corpus bytes).
    """

    command: str
    workers: List[int] = field(default_factory=lambda: [1])
    shards: List[int] = field(default_factory=lambda: [1])
    payload_size: Optional[int] = None
    profile: str = "desk-shaped"
    seed: int = 0
    out: Optional[str] = None
    medium: Optional[Medium] = None
    partitions: Optional[int] = None
    reducers: int = WORDCOUNT_REDUCERS
    skew: float = 0.0
    sample_rate: float = 0.01
    trace: Optional[str] = None
    plot: bool = False

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}, choose from {COMMANDS}")
        if any(w < 0 for w in self.workers) or any(
            a >= b for a, b in zip(self.workers, self.workers[1:])
        ):
            raise ValueError(f"workers must be nonnegative and increasing, got {self.workers}")
        if not self.shards or any(s < 1 for s in self.shards) or any(
            a >= b for a, b in zip(self.shards, self.shards[1:])
        ):
            raise ValueError(f"shards must be positive and increasing, got {self.shards}")
        if self.payload_size is not None and self.payload_size < 0:
            raise ValueError(f"payload size must be nonnegative, got {self.payload_size}")
        if self.partitions is not None and self.partitions < 1:
            raise ValueError(f"partitions must be positive, got {self.partitions}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")

    @property
    def sweep(self) -> List[int]:
        """Worker counts that produce rows"""
        return [w for w in self.workers if w > 0]


def _engine(spec: BenchSpec, base: EngineConfig, workers: int, shards: int = 1) -> Engine:
    config = base.replace(pool_size=workers, kv_shards=shards, seed=spec.seed)
    job_config = JobConfig(limits=config.limits, poll_interval=POLL_INTERVAL)
    return Engine(config, job_config=job_config)


def _round(value: float) -> float:
    return round(float(value), 6)


def _outputs(driver: Driver, function_id: str, payloads: Sequence[bytes]) -> List[Record]:
    return [json.loads(out) for out in driver.results(driver.map(function_id, payloads))]


def _write_trace(spec: BenchSpec, engine: Engine, suffix: str) -> None:
    if spec.trace is None:
        return
    path = Path(spec.trace)
    if suffix:
        path = path.with_name(f"{path.stem}-{suffix}{path.suffix}")
    engine.runtime.write_trace(path)


def compute_kernel(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point: repeated square matrix multiplies"""
    spec = json.loads(payload)
    size, repeats = spec["size"], spec["repeats"]
    left = ctx.rng.standard_normal((size, size))
    right = ctx.rng.standard_normal((size, size))
    flops = 2.0 * size**3 * repeats
    started = ctx.now()
    with ctx.timing("compute"):
        for _ in range(repeats):
            np.matmul(left, right)
        ctx.charge_flops(flops)
    return json.dumps({"flops": flops, "seconds": ctx.now() - started}).encode("utf-8")


def storage_roundtrip(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point: write then read back one object"""
    spec = json.loads(payload)
    data = bytes(spec["size"])
    started = ctx.now()
    ctx.objects.put(spec["key"], data)
    written = ctx.now()
    ctx.objects.get(spec["key"])
    return json.dumps(
        {"write_seconds": written - started, "read_seconds": ctx.now() - written}
    ).encode("utf-8")


def kv_roundtrip(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point: synchronous put/get pairs of small values"""
    spec = json.loads(payload)
    value = bytes(spec["value_size"])
    latencies = []
    started = ctx.now()
    for i in range(spec["ops"]):
        key = f"bench-kv/{ctx.task}/{(i // 2) % 8}"
        before = ctx.now()
        if i % 2 == 0:
            ctx.kv.put(key, value)
        else:
            ctx.kv.get(key)
        latencies.append(ctx.now() - before)
    return json.dumps(
        {"ops": spec["ops"], "seconds": ctx.now() - started, "latencies": latencies}
    ).encode("utf-8")


COMPUTE = FunctionDescriptor("bench-compute", "1", compute_kernel)
STORAGE = FunctionDescriptor("bench-storage", "1", storage_roundtrip)
KV = FunctionDescriptor("bench-kv", "1", kv_roundtrip)


def _rate(amount: float, seconds: float) -> float:
    return amount / seconds if amount > 0 and seconds > 0 else 0.0


def bench_compute(spec: BenchSpec, base: EngineConfig) -> List[Record]:
    """Aggregate and per-worker GFLOPS of a matrix multiply kernel"""
    rows = []
    payload = json.dumps({"size": MATRIX_SIZE, "repeats": MATRIX_REPEATS}).encode("utf-8")
    for workers in spec.sweep:
        with _engine(spec, base, workers) as engine:
            function_id = engine.runtime.ensure_registered(COMPUTE)
            results = _outputs(engine.driver, function_id, [payload] * workers)
        aggregate = sum(_rate(r["flops"], r["seconds"]) for r in results) / 1e9
        rows.append(
            {
                "workers": workers,
                "aggregate_gflops": _round(aggregate),
                "per_worker_gflops": _round(aggregate / workers),
            }
        )
        logger.info(f"bench-compute: {workers} workers, {aggregate:.2f} GFLOPS")
    return rows


def bench_storage(spec: BenchSpec, base: EngineConfig) -> List[Record]:
    """Aggregate write and read throughput, each worker moving one object"""
    size = STORAGE_PAYLOAD if spec.payload_size is None else spec.payload_size
    rows = []
    for workers in spec.sweep:
        with _engine(spec, base, workers) as engine:
            function_id = engine.runtime.ensure_registered(STORAGE)
            payloads = [
                json.dumps({"size": size, "key": f"bench/storage/{i}"}).encode("utf-8")
                for i in range(workers)
            ]
            results = _outputs(engine.driver, function_id, payloads)
        writes = np.array([_rate(size, r["write_seconds"]) / MB for r in results])
        reads = np.array([_rate(size, r["read_seconds"]) / MB for r in results])
        rows.append(
            {
                "workers": workers,
                "write_mbps": _round(writes.sum()),
                "read_mbps": _round(reads.sum()),
                "worker_write_mbps_min": _round(writes.min()),
                "worker_write_mbps_p50": _round(np.median(writes)),
                "worker_write_mbps_max": _round(writes.max()),
                "worker_read_mbps_min": _round(reads.min()),
                "worker_read_mbps_p50": _round(np.median(reads)),
                "worker_read_mbps_max": _round(reads.max()),
            }
        )
        logger.info(
            f"bench-storage: {workers} workers, write {writes.sum():.1f} MB/s, "
            f"read {reads.sum():.1f} MB/s"
        )
    return rows


def bench_kv(spec: BenchSpec, base: EngineConfig) -> List[Record]:
    """Synchronous 128-byte transaction rate and latency per worker count and shard count"""
    payload = json.dumps({"ops": KV_OPS_PER_WORKER, "value_size": KV_VALUE_SIZE}).encode("utf-8")
    rows = []
    for shards in spec.shards:
        for workers in spec.sweep:
            with _engine(spec, base, workers, shards) as engine:
                function_id = engine.runtime.ensure_registered(KV)
                results = _outputs(engine.driver, function_id, [payload] * workers)
            aggregate = sum(_rate(r["ops"], r["seconds"]) for r in results)
            latencies = np.concatenate([r["latencies"] for r in results]) * 1e3
            rows.append(
                {
                    "workers": workers,
                    "shards": shards,
                    "aggregate_tps": _round(aggregate),
                    "per_worker_tps": _round(aggregate / workers),
                    "latency_p50_ms": _round(np.percentile(latencies, 50)),
                    "latency_p99_ms": _round(np.percentile(latencies, 99)),
                }
            )
            logger.info(f"bench-kv: {workers} workers, {shards} shards, {aggregate:.0f} tx/s")
    return rows


def _split_lines(text: bytes, pieces: int) -> List[bytes]:
    lines = text.splitlines(keepends=True)
    pieces = max(1, min(pieces, len(lines)))
    cuts = [(i * len(lines)) // pieces for i in range(pieces + 1)]
    return [b"".join(lines[cuts[i] : cuts[i + 1]]) for i in range(pieces)]


def _costs(engine: Engine) -> Record:
    report = job_cost(engine.runtime.trace_records(), PriceBook())
    return {
        "fn_cost": report.fn_cost,
        "kv_cost": report.kv_cost,
        "total_cost": report.total,
    }


def run_wordcount(spec: BenchSpec, base: EngineConfig) -> List[Record]:
    """Word count over the bundled tiny corpus, or a generated one of payload_size bytes"""
    partitions = spec.partitions or WORDCOUNT_PARTITIONS
    medium = spec.medium or Medium.OBJECT
    if spec.payload_size is None:
        texts = _split_lines(TINY_CORPUS.read_bytes(), partitions)
    else:
        texts = generate_corpus(partitions, spec.payload_size // partitions, spec.seed)
    expected = serial_word_count(texts)
    many = len(spec.workers) * len(spec.shards) > 1
    rows = []
    for shards in spec.shards:
        for workers in spec.sweep:
            with _engine(spec, base, workers, shards) as engine:
                driver = engine.driver
                keys = put_corpus(driver, texts)
                started = engine.clock.now()
                output_key = word_count(driver, keys, spec.reducers, medium)
                wall_time = engine.clock.now() - started
                output = driver.objects.object_get(output_key, driver.link)
                costs = _costs(engine)
                _write_trace(spec, engine, f"w{workers}-s{shards}" if many else "")
            if output != expected:
                raise VerificationFailed(
                    f"word count with {workers} workers disagrees with the serial count"
                )
            rows.append(
                {
                    "workers": workers,
                    "shards": shards,
                    "partitions": len(texts),
                    "reducers": spec.reducers,
                    "medium": medium.value,
                    "wall_time": _round(wall_time),
                    "words": output.count(b"\n"),
                    **{k: _round(v) for k, v in costs.items()},
                    "verdict": "OK",
                }
            )
    return rows


def breakdown(reports: Sequence[InvocationReport]) -> Record:
    """Mean seconds per invocation spent in each breakdown category"""
    if not reports:
        return {label: 0.0 for label in BREAKDOWN}
    return {
        label: _round(sum(r.timings.get(label, 0.0) for r in reports) / len(reports))
        for label in BREAKDOWN
    }


# pylint: disable=too-many-locals
def run_sort(spec: BenchSpec, base: EngineConfig) -> List[Record]:
    """Sort of generated records, swept over shards and workers"""
    size = SORT_SIZE if spec.payload_size is None else spec.payload_size
    partitions = spec.partitions or SORT_PARTITIONS
    medium = spec.medium or Medium.KV
    data = generate_records(size // RECORD_SIZE, spec.seed, spec.skew)
    expected = checksum(data)
    many = len(spec.workers) * len(spec.shards) > 1
    rows = []
    for shards in spec.shards:
        for workers in spec.sweep:
            with _engine(spec, base, workers, shards) as engine:
                driver = engine.driver
                keys = put_records(driver, data, partitions)
                before = len(engine.runtime.reports)
                started = engine.clock.now()
                outputs = terasort(
                    driver, keys, partitions, medium, spec.sample_rate, seed=spec.seed
                )
                wall_time = engine.clock.now() - started
                result = read_output(driver, outputs)
                timings = breakdown(engine.runtime.reports[before:])
                costs = _costs(engine)
                _write_trace(spec, engine, f"w{workers}-s{shards}" if many else "")
            if len(result) != len(data) or checksum(result) != expected or not is_sorted(result):
                raise VerificationFailed(
                    f"sort with {workers} workers and {shards} shards lost or misordered records"
                )
            rows.append(
                {
                    "workers": workers,
                    "shards": shards,
                    "partitions": partitions,
                    "medium": medium.value,
                    "records": len(data) // RECORD_SIZE,
                    "wall_time": _round(wall_time),
                    **timings,
                    **{k: _round(v) for k, v in costs.items()},
                    "verdict": "OK",
                }
            )
            logger.info(f"sort: {workers} workers, {shards} shards, {wall_time:.3f}s")
    return rows


BENCHMARKS: Dict[str, Callable[[BenchSpec, EngineConfig], List[Record]]] = {
    "bench-compute": bench_compute,
    "bench-storage": bench_storage,
    "bench-kv": bench_kv,
    "wordcount": run_wordcount,
    "sort": run_sort,
}


def run(spec: BenchSpec, base: Optional[EngineConfig] = None) -> List[Record]:
    """Runs a benchmark command and writes its CSV (and plot script) if spec.out is set"""
    if spec.command not in BENCHMARKS:
        raise ValueError(f"{spec.command} is not a benchmark")
    base = base or profile(spec.profile)
    rows = BENCHMARKS[spec.command](spec, base)
    if spec.out is not None:
        file_io, name = FileIO.for_file(spec.out)
        file_io.write_csv(rows, name, skip_empty=False, columns=COLUMNS[spec.command])
        if spec.plot:
            write_plot_script(spec.out, spec.command)
    return rows


_PLOTS: Dict[str, List[str]] = {
    "bench-compute": ["aggregate_gflops"],
    "bench-storage": ["write_mbps", "read_mbps"],
    "bench-kv": ["aggregate_tps"],
    "wordcount": ["wall_time"],
    "sort": ["wall_time"],
}


def write_plot_script(csv_path: Path | str, command: str) -> Path:
    """Writes a gnuplot script next to `csv_path` that plots it against workers"""
    csv_path = Path(csv_path)
    columns = COLUMNS[command]
    series = ", ".join(
        f"'{csv_path.name}' using 1:{columns.index(name) + 1} with linespoints title '{name}'"
        for name in _PLOTS[command]
    )
    script = csv_path.with_suffix(".gp")
    script.write_text(
        "\n".join(
            [
                "set datafile separator ','",
                "set key autotitle columnhead",
                "set xlabel 'workers'",
                f"set ylabel '{_PLOTS[command][0]}'",
                "set terminal pngcairo size 800,500",
                f"set output '{csv_path.stem}.png'",
                f"plot {series}",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return script
