"""
Two-stage sample sort over 100-byte records (10-byte key, 90-byte value).

Stage 0 samples keys from every input object and picks P-1 range
boundaries. Stage 1 (one task per input object) range-partitions its
records into P fragments. Stage 2 (one task per partition) reads its
column of fragments in map order and sorts it. Equal keys keep their
(map task, input offset) order, so outputs are byte-identical across
runs, worker counts and fault schedules.

Fragment framing: an 8-byte little-endian record count, then the
records; optionally zlib-compressed as a whole.
"""
from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from wrenlet.driver import Driver
from wrenlet.job import JobConfig
from wrenlet.models import IntermediateTooLarge, TaskFailed, TooFewSamples
from wrenlet.patterns.layout import Medium, ShuffleLayout, read_fragment, write_fragment
from wrenlet.runtime.context import InvocationContext
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.types import KeyLike, ObjectKey

logger = logging.getLogger(__name__)

KEY_SIZE = 10
VALUE_SIZE = 90
RECORD_SIZE = KEY_SIZE + VALUE_SIZE
RECORD_DTYPE = np.dtype([("key", f"S{KEY_SIZE}"), ("value", f"V{VALUE_SIZE}")])

HEADER = struct.Struct("<Q")

# Modelled compute cost per record on a virtual clock.
PARTITION_SECONDS_PER_RECORD = 100e-9
SORT_SECONDS_PER_RECORD = 200e-9

DEFAULT_SAMPLE_RATE = 0.01


def as_records(data: bytes) -> np.ndarray:
    """Read-only record view of `data`"""
    if len(data) % RECORD_SIZE:
        raise ValueError(f"{len(data)} bytes is not a whole number of {RECORD_SIZE}-byte records")
    return np.frombuffer(data, dtype=RECORD_DTYPE)


@dataclass(frozen=True)
class RangePartition:
    """
    P-1 boundaries split the key space into P ranges. Partition i holds
    keys k with boundaries[i-1] < k <= boundaries[i]; a key equal to a
    boundary goes to the lower partition, so all-identical keys end up
    in partition 0.
    """

    boundaries: Tuple[bytes, ...]

    def __post_init__(self) -> None:
        for boundary in self.boundaries:
            if not isinstance(boundary, bytes) or len(boundary) > KEY_SIZE:
                raise ValueError(f"boundary {boundary!r} is not a key of at most {KEY_SIZE} bytes")
        pairs = zip(self.boundaries, self.boundaries[1:])
        if any(low > high for low, high in pairs):
            raise ValueError("boundaries must be sorted")

    @classmethod
    def of(cls, boundaries: Sequence[bytes]) -> RangePartition:
        """Builds a partition from any sequence of boundary keys"""
        return cls(tuple(bytes(b) for b in boundaries))

    @property
    def partitions(self) -> int:
        """P"""
        return len(self.boundaries) + 1

    @property
    def degenerate(self) -> bool:
        """True when two boundaries coincide, leaving some ranges empty"""
        return len(set(self.boundaries)) < len(self.boundaries)

    def _table(self) -> np.ndarray:
        return np.array(self.boundaries, dtype=f"S{KEY_SIZE}")

    def partition_of(self, key: bytes) -> int:
        """Index of the range holding `key`"""
        if not self.boundaries:
            return 0
        return int(np.searchsorted(self._table(), np.bytes_(key), side="left"))

    def partition_indices(self, keys: np.ndarray) -> np.ndarray:
        """partition_of for a whole key array"""
        if not self.boundaries:
            return np.zeros(len(keys), dtype=np.int64)
        return np.searchsorted(self._table(), keys, side="left")

    def to_list(self) -> List[str]:
        """Hex form for task payloads"""
        return [b.hex() for b in self.boundaries]

    @classmethod
    def from_list(cls, data: Sequence[str]) -> RangePartition:
        """Inverse of to_list"""
        return cls.of([bytes.fromhex(h) for h in data])


def encode_fragment(records: np.ndarray, compress: bool = False) -> bytes:
    """Frames `records` as one shuffle fragment"""
    data = HEADER.pack(len(records)) + records.tobytes()
    return zlib.compress(data, 1) if compress else data


def decode_fragment(data: bytes, compress: bool = False) -> np.ndarray:
    """Inverse of encode_fragment"""
    if compress:
        data = zlib.decompress(data)
    (count,) = HEADER.unpack_from(data)
    records = as_records(data[HEADER.size :])
    if len(records) != count:
        raise ValueError(f"fragment announces {count} records but holds {len(records)}")
    return records


def sample_keys(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point: seeded uniform sample of the keys of one input object"""
    spec = json.loads(payload)
    with ctx.timing("input"):
        records = as_records(ctx.objects.get(spec["input_key"]))
    count = round(len(records) * spec["sample_rate"])
    rng = np.random.default_rng([spec["seed"], spec["index"]])
    chosen = np.sort(rng.choice(len(records), size=count, replace=False))
    return records["key"][chosen].tobytes()


def partition_records(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point of stage 1: range-partition one input object"""
    spec = json.loads(payload)
    layout = ShuffleLayout.from_dict(spec["layout"])
    ranges = RangePartition.from_list(spec["boundaries"])
    with ctx.timing("input"):
        data = ctx.objects.get(spec["input_key"])
    ctx.scratch.allocate(len(data))
    with ctx.timing("compute"):
        records = as_records(data)
        ctx.charge_compute(len(records) * PARTITION_SECONDS_PER_RECORD)
        parts = ranges.partition_indices(records["key"])
        ordered = records[np.argsort(parts, kind="stable")]
        bounds = np.concatenate(
            [[0], np.cumsum(np.bincount(parts, minlength=layout.reduce_tasks))]
        )
    with ctx.timing("shuffle"):
        for r in range(layout.reduce_tasks):
            fragment = encode_fragment(ordered[bounds[r] : bounds[r + 1]], spec["compress"])
            write_fragment(ctx, layout, spec["map_index"], r, fragment)
    return str(len(records)).encode("ascii")


def merge_partition(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point of stage 2: sort one column of fragments"""
    spec = json.loads(payload)
    layout = ShuffleLayout.from_dict(spec["layout"])
    with ctx.timing("shuffle"):
        fragments = [
            decode_fragment(read_fragment(ctx, layout, m, spec["reducer"]), spec["compress"])
            for m in range(layout.map_tasks)
        ]
    with ctx.timing("compute"):
        records = np.concatenate(fragments) if fragments else np.empty(0, RECORD_DTYPE)
        ctx.scratch.allocate(records.nbytes)
        ctx.charge_compute(len(records) * SORT_SECONDS_PER_RECORD)
        return records[np.argsort(records["key"], kind="stable")].tobytes()


SAMPLE = FunctionDescriptor("sort-sample", "1", sample_keys)
PARTITION = FunctionDescriptor("sort-partition", "1", partition_records)
MERGE = FunctionDescriptor("sort-merge", "1", merge_partition)


def sample_boundaries(
    driver: Driver,
    input_keys: Sequence[KeyLike],
    partitions: int,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
    config: Optional[JobConfig] = None,
) -> RangePartition:
    """
    Samples keys from every input object in parallel and picks P-1
    equally spaced quantiles of the sorted sample as boundaries.
    """
    if partitions < 1:
        raise ValueError(f"need at least one partition, got {partitions}")
    if not 0 < sample_rate <= 1:
        raise ValueError(f"sample rate must be in (0, 1], got {sample_rate}")
    if partitions == 1:
        return RangePartition(())
    function_id = driver.runtime.ensure_registered(SAMPLE)
    inputs = [
        json.dumps(
            {
                "input_key": str(ObjectKey.of(key)),
                "sample_rate": sample_rate,
                "seed": seed,
                "index": i,
            }
        ).encode("utf-8")
        for i, key in enumerate(input_keys)
    ]
    outputs = driver.results(driver.map(function_id, inputs, config))
    keys = np.sort(np.frombuffer(b"".join(outputs), dtype=f"S{KEY_SIZE}"))
    if len(keys) < partitions:
        raise TooFewSamples(f"drew {len(keys)} samples for {partitions} partitions")
    cuts = [((i + 1) * len(keys)) // partitions for i in range(partitions - 1)]
    ranges = RangePartition.of([keys[cut] for cut in cuts])
    if ranges.degenerate:
        logger.warning(
            f"sample of {len(keys)} keys yields duplicate boundaries; "
            "some partitions will be empty"
        )
    return ranges


# pylint: disable=too-many-arguments
def terasort(
    driver: Driver,
    input_keys: Sequence[KeyLike],
    partitions: int,
    medium: Medium = Medium.OBJECT,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    compress: bool = False,
    seed: int = 0,
    config: Optional[JobConfig] = None,
    keep_intermediates: bool = False,
) -> List[ObjectKey]:
    """
    Sorts the records of `input_keys` into `partitions` output objects
    whose concatenation is globally sorted. Returns the output keys in
    key-range order.

    Raises IntermediateTooLarge when a fragment does not fit into a
    key-value value; the caller has to raise the partition count.
    """
    ranges = sample_boundaries(driver, input_keys, partitions, sample_rate, seed, config)
    layout = ShuffleLayout(driver.new_job_id(), len(input_keys), partitions, medium)
    partition_id = driver.runtime.ensure_registered(PARTITION)
    merge_id = driver.runtime.ensure_registered(MERGE)
    logger.info(
        f"sort {layout.job}: {layout.map_tasks} map tasks, {partitions} partitions, "
        f"intermediates on {medium.value}"
    )
    try:
        map_inputs = [
            json.dumps(
                {
                    "layout": layout.to_dict(),
                    "map_index": m,
                    "input_key": str(ObjectKey.of(key)),
                    "boundaries": ranges.to_list(),
                    "compress": compress,
                }
            ).encode("utf-8")
            for m, key in enumerate(input_keys)
        ]
        driver.results(driver.map(partition_id, map_inputs, config))

        reduce_inputs = [
            json.dumps({"layout": layout.to_dict(), "reducer": r, "compress": compress}).encode(
                "utf-8"
            )
            for r in range(partitions)
        ]
        futures = driver.map(merge_id, reduce_inputs, config)
        driver.wait(futures)
        driver.raise_for_failures(futures)
        return [future.result_key for future in futures]
    except TaskFailed as err:
        if isinstance(err.__cause__, IntermediateTooLarge):
            raise err.__cause__ from None
        raise
    finally:
        if not keep_intermediates:
            drop_intermediates(driver, layout)


def drop_intermediates(driver: Driver, layout: ShuffleLayout) -> int:
    """Deletes every fragment of `layout`; returns how many existed"""
    if layout.medium == Medium.KV:
        kv = driver.runtime.kv
        return sum(kv.kv_delete(str(key), driver.link) for key in layout.keys())
    return driver.objects.delete_prefix(layout.prefix, driver.link)


def read_output(driver: Driver, output_keys: Sequence[KeyLike]) -> bytes:
    """Concatenation of the sorted output objects"""
    return b"".join(driver.objects.object_get(key, driver.link) for key in output_keys)


def generate_records(count: int, seed: int = 0, skew: float = 0.0) -> bytes:
    """
    `count` records with uniform random keys. With skew > 0, that fraction
    of the records draws its key from a handful of hot keys instead.
    """
    if not 0 <= skew <= 1:
        raise ValueError(f"skew must be in [0, 1], got {skew}")
    rng = np.random.default_rng(seed)
    raw = np.frombuffer(rng.bytes(count * RECORD_SIZE), dtype=np.uint8).reshape(count, RECORD_SIZE)
    raw = raw.copy()
    if skew > 0 and count:
        hot = np.frombuffer(rng.bytes(8 * KEY_SIZE), dtype=np.uint8).reshape(8, KEY_SIZE)
        chosen = np.flatnonzero(rng.random(count) < skew)
        raw[chosen, :KEY_SIZE] = hot[rng.integers(0, len(hot), size=len(chosen))]
    return raw.tobytes()


def put_records(
    driver: Driver, data: bytes, pieces: int, name: str = "sort-input"
) -> List[ObjectKey]:
    """Splits `data` into `pieces` objects of whole records; returns their keys"""
    if pieces < 1:
        raise ValueError(f"need at least one piece, got {pieces}")
    count = len(data) // RECORD_SIZE
    cuts = [(i * count) // pieces * RECORD_SIZE for i in range(pieces + 1)]
    keys = [ObjectKey(name, str(i)) for i in range(pieces)]
    for i, key in enumerate(keys):
        driver.objects.object_put(key, data[cuts[i] : cuts[i + 1]], driver.link)
    return keys


def serial_sort(data: bytes) -> bytes:
    """Single-process oracle of terasort"""
    records = as_records(data)
    return records[np.argsort(records["key"], kind="stable")].tobytes()


def is_sorted(data: bytes) -> bool:
    """True iff every adjacent pair of records is in key order"""
    keys = as_records(data)["key"]
    return bool(np.all(keys[:-1] <= keys[1:]))


_CHUNK = 1 << 16
_MIX = np.uint64(0xFF51AFD7ED558CCD)
_WEIGHTS = np.cumprod(np.full(RECORD_SIZE // 4, 0x100000001B3, dtype=np.uint64), dtype=np.uint64)


def checksum(data: bytes) -> int:
    """Order-independent checksum of the record multiset"""
    words = np.frombuffer(data, dtype="<u4").reshape(-1, RECORD_SIZE // 4)
    total = 0
    for start in range(0, len(words), _CHUNK):
        chunk = words[start : start + _CHUNK].astype(np.uint64)
        hashed = (chunk * _WEIGHTS).sum(axis=1, dtype=np.uint64)
        hashed ^= hashed >> np.uint64(33)
        hashed *= _MIX
        hashed ^= hashed >> np.uint64(33)
        total = (total + int(hashed.sum(dtype=np.uint64))) % (1 << 64)
    return total
