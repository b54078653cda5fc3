"""
Word count as a two-stage shuffle: map tasks count words of one corpus
object into one hash partition per reducer, reduce task r merges column r, and the
driver concatenates the sorted reducer outputs.

Words are maximal runs of ASCII letters and digits, folded to lower case.
Output lines are b"word\\tcount\\n", sorted by word.
"""
from __future__ import annotations

import heapq
import json
import logging
import re
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from wrenlet.driver import Driver
from wrenlet.job import JOBS_NAMESPACE, JobConfig
from wrenlet.patterns.layout import Medium, ShuffleLayout, read_fragment, write_fragment
from wrenlet.runtime.context import InvocationContext
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.types import KeyLike, ObjectKey
from wrenlet.util import stable_hash

logger = logging.getLogger(__name__)

WORD = re.compile(rb"[A-Za-z0-9]+")

# Modelled per-byte cost of tokenizing and counting on a virtual clock.
COUNT_SECONDS_PER_BYTE = 10e-9


def tokenize(text: bytes) -> List[bytes]:
    """Lower-cased words of `text`"""
    return [word.lower() for word in WORD.findall(text)]


def partition_of(word: bytes, reducers: int) -> int:
    """Reduce task responsible for `word`"""
    return stable_hash(word) % reducers


def encode_counts(counts: Dict[bytes, int]) -> bytes:
    """Sorted b"word\\tcount\\n" lines"""
    return b"".join(b"%s\t%d\n" % (word, counts[word]) for word in sorted(counts))


def decode_counts(data: bytes) -> Dict[bytes, int]:
    """Inverse of encode_counts"""
    counts: Dict[bytes, int] = {}
    for line in data.splitlines():
        word, _, count = line.partition(b"\t")
        counts[word] = int(count)
    return counts


def count_words_map(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point of stage 1"""
    spec = json.loads(payload)
    layout = ShuffleLayout.from_dict(spec["layout"])
    with ctx.timing("input"):
        text = ctx.objects.get(spec["corpus_key"])
    with ctx.timing("compute"):
        ctx.charge_compute(len(text) * COUNT_SECONDS_PER_BYTE)
        counts = Counter(tokenize(text))
        partitions: List[Dict[bytes, int]] = [{} for _ in range(layout.reduce_tasks)]
        for word, count in counts.items():
            partitions[partition_of(word, layout.reduce_tasks)][word] = count
    with ctx.timing("shuffle"):
        for r, part in enumerate(partitions):
            write_fragment(ctx, layout, spec["map_index"], r, encode_counts(part))
    return str(sum(counts.values())).encode("ascii")


def count_words_reduce(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point of stage 2"""
    spec = json.loads(payload)
    layout = ShuffleLayout.from_dict(spec["layout"])
    reducer = spec["reducer"]
    merged: Counter = Counter()
    with ctx.timing("shuffle"):
        fragments = [read_fragment(ctx, layout, m, reducer) for m in range(layout.map_tasks)]
    with ctx.timing("compute"):
        for fragment in fragments:
            ctx.charge_compute(len(fragment) * COUNT_SECONDS_PER_BYTE)
            merged.update(decode_counts(fragment))
        return encode_counts(merged)


COUNT_MAP = FunctionDescriptor("wordcount-map", "1", count_words_map)
COUNT_REDUCE = FunctionDescriptor("wordcount-reduce", "1", count_words_reduce)


def word_count(
    driver: Driver,
    corpus_keys: Sequence[KeyLike],
    reducers: int,
    medium: Medium = Medium.OBJECT,
    config: Optional[JobConfig] = None,
) -> ObjectKey:
    """
    Counts the words of all corpus objects and returns the key of the
    sorted output object jobs/<job>/output/wordcount.
    """
    if reducers < 1:
        raise ValueError(f"need at least one reducer, got {reducers}")
    map_id = driver.runtime.ensure_registered(COUNT_MAP)
    reduce_id = driver.runtime.ensure_registered(COUNT_REDUCE)
    layout = ShuffleLayout(driver.new_job_id(), len(corpus_keys), reducers, medium)
    logger.info(f"word count over {len(corpus_keys)} objects, {reducers} reducers")

    map_inputs = [
        json.dumps(
            {"layout": layout.to_dict(), "map_index": m, "corpus_key": str(ObjectKey.of(key))}
        ).encode("utf-8")
        for m, key in enumerate(corpus_keys)
    ]
    driver.results(driver.map(map_id, map_inputs, config))

    reduce_inputs = [
        json.dumps({"layout": layout.to_dict(), "reducer": r}).encode("utf-8")
        for r in range(reducers)
    ]
    outputs = driver.results(driver.map(reduce_id, reduce_inputs, config))

    merged = b"".join(heapq.merge(*(out.splitlines(keepends=True) for out in outputs)))
    output_key = ObjectKey(JOBS_NAMESPACE, f"{layout.job}/output/wordcount")
    driver.objects.object_put(output_key, merged, driver.link)
    return output_key


def serial_word_count(texts: Iterable[bytes]) -> bytes:
    """Single-process oracle of word_count"""
    counts: Counter = Counter()
    for text in texts:
        counts.update(tokenize(text))
    return encode_counts(counts)


def generate_corpus(
    partitions: int, partition_size: int, seed: int = 0, vocabulary: int = 5000
) -> List[bytes]:
    """Synthetic text with Zipf-distributed word frequencies"""
    rng = np.random.default_rng(seed)
    lengths = rng.integers(2, 10, size=vocabulary)
    letters = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz", dtype=np.uint8)
    words = [letters[rng.integers(0, 26, size=n)].tobytes() for n in lengths]
    texts = []
    for _ in range(partitions):
        chunks: List[bytes] = []
        size = 0
        while size < partition_size:
            ranks = np.minimum(rng.zipf(1.2, size=1024), vocabulary) - 1
            chunk = b" ".join(words[r] for r in ranks) + b"\n"
            chunks.append(chunk)
            size += len(chunk)
        texts.append(b"".join(chunks)[:partition_size])
    return texts


def put_corpus(driver: Driver, texts: Sequence[bytes], name: str = "corpus") -> List[ObjectKey]:
    """Stores `texts` as <name>/<i> and returns their keys"""
    keys = [ObjectKey(name, str(i)) for i in range(len(texts))]
    for key, text in zip(keys, texts):
        driver.objects.object_put(key, text, driver.link)
    return keys
