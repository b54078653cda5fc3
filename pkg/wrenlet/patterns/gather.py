"""
Map followed by a monolithic reduce in the driver process, plus a
featurize-then-fit pipeline built on it.
"""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from wrenlet.driver import Driver
from wrenlet.job import JobConfig
from wrenlet.models import GatherTooLarge
from wrenlet.runtime.context import InvocationContext
from wrenlet.runtime.registry import FunctionDescriptor

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 1 << 30

Reducer = Callable[[List[bytes]], bytes]


def gather_reduce(
    driver: Driver,
    function_id: str,
    inputs: Sequence[bytes],
    reduce_fn: Reducer,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    config: Optional[JobConfig] = None,
) -> bytes:
    """
    Maps `function_id` over `inputs`, collects every output in the driver
    (in input order) and returns reduce_fn(outputs). Raises GatherTooLarge
    when the outputs together exceed `memory_budget` bytes.
    """
    futures = driver.map(function_id, inputs, config)
    driver.wait(futures)
    driver.raise_for_failures(futures)
    outputs: List[bytes] = []
    total = 0
    for future in futures:
        output = driver.fetch_result(future)
        total += len(output)
        if total > memory_budget:
            raise GatherTooLarge(
                f"map outputs exceed the driver budget of {memory_budget} bytes"
            )
        outputs.append(output)
    logger.info(f"gathered {len(outputs)} outputs ({total} bytes), reducing")
    return reduce_fn(outputs)


FEATURES_PER_INPUT = 4


def featurize_rows(rows: np.ndarray) -> np.ndarray:
    """Fixed nonlinear features of the first column: [1, x, x^2, sin x]"""
    x = rows[:, 0]
    return np.column_stack([np.ones_like(x), x, x**2, np.sin(x)])


def featurize(payload: bytes, ctx: InvocationContext) -> bytes:
    """Entry point: rows of (x, target) as float64 -> rows of (features, target)"""
    rows = np.frombuffer(payload, dtype="<f8").reshape(-1, 2)
    ctx.charge_flops(rows.shape[0] * 20)
    features = featurize_rows(rows)
    return np.column_stack([features, rows[:, 1]]).astype("<f8").tobytes()


FEATURIZE = FunctionDescriptor("featurize", "1", featurize)


def fit_least_squares(outputs: List[bytes]) -> bytes:
    """Reduce step: least squares fit over all featurized rows"""
    width = FEATURES_PER_INPUT + 1
    table = np.concatenate(
        [np.frombuffer(out, dtype="<f8").reshape(-1, width) for out in outputs]
        or [np.empty((0, width))]
    )
    weights, *_ = np.linalg.lstsq(table[:, :-1], table[:, -1], rcond=None)
    return weights.astype("<f8").tobytes()


def featurize_and_fit(
    driver: Driver, chunks: Sequence[np.ndarray], config: Optional[JobConfig] = None
) -> np.ndarray:
    """Featurizes each (n, 2) chunk in its own task and fits weights in the driver"""
    function_id = driver.runtime.ensure_registered(FEATURIZE)
    inputs = [np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks]
    fitted = gather_reduce(driver, function_id, inputs, fit_least_squares, config=config)
    return np.frombuffer(fitted, dtype="<f8")


def serial_featurize_and_fit(chunks: Sequence[np.ndarray]) -> np.ndarray:
    """Single-process oracle of featurize_and_fit"""
    rows = np.concatenate([np.asarray(c, dtype="<f8") for c in chunks])
    weights, *_ = np.linalg.lstsq(featurize_rows(rows), rows[:, 1], rcond=None)
    return weights
