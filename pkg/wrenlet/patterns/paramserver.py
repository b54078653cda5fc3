"""
Asynchronous SGD for least squares with the model kept in the key-value
store. Each worker repeatedly reads the latest model, computes a gradient
and publishes the step with compare-and-swap; a lost swap means the
gradient is recomputed on a fresh read.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from wrenlet.driver import Driver
from wrenlet.job import JobConfig
from wrenlet.models import Divergence
from wrenlet.runtime.context import InvocationContext
from wrenlet.runtime.registry import FunctionDescriptor
from wrenlet.types import KeyLike, ObjectKey

logger = logging.getLogger(__name__)

VERSION = struct.Struct("<Q")
DIVERGENCE_FACTOR = 10.0
SGD_NAMESPACE = "sgd"

Trajectory = List[Tuple[int, float]]


def encode_dataset(features: np.ndarray, targets: np.ndarray) -> bytes:
    """b"rows cols\\n" followed by row-major float64 rows of (features, target)"""
    rows, cols = features.shape
    if targets.shape != (rows,):
        raise ValueError(f"{rows} rows but {targets.shape} targets")
    table = np.column_stack([features, targets]).astype("<f8")
    return f"{rows} {cols}\n".encode("ascii") + table.tobytes()


def decode_dataset(data: bytes) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of encode_dataset"""
    header, _, body = data.partition(b"\n")
    try:
        rows, cols = (int(n) for n in header.split())
        table = np.frombuffer(body, dtype="<f8").reshape(rows, cols + 1)
    except ValueError as err:
        raise ValueError(f"malformed dataset header {header[:40]!r}") from err
    return table[:, :cols], table[:, cols]


def make_least_squares(
    rows: int, cols: int, seed: int = 0, noise: float = 0.1
) -> Tuple[np.ndarray, np.ndarray]:
    """Well-conditioned Gaussian design with targets from a random model plus noise"""
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((rows, cols))
    truth = rng.standard_normal(cols)
    return features, features @ truth + noise * rng.standard_normal(rows)


def loss(features: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """Half mean squared residual"""
    residual = features @ weights - targets
    return float(0.5 * np.mean(residual**2))


def gradient_step(
    features: np.ndarray, targets: np.ndarray, weights: np.ndarray, step_size: float
) -> np.ndarray:
    """One gradient descent step on the half mean squared residual"""
    residual = features @ weights - targets
    return weights - step_size * (features.T @ residual) / len(targets)


def least_squares_minimum(features: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, float]:
    """Closed-form minimizer and its loss"""
    weights, *_ = np.linalg.lstsq(features, targets, rcond=None)
    return weights, loss(features, targets, weights)


@dataclass
class SgdModel:
    """Shared model state; `version` counts publishes"""

    weights: np.ndarray
    step_size: float
    version: int = 0
    trajectory: Trajectory = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    def to_bytes(self) -> bytes:
        """KV value: 8-byte version then float64 weights"""
        return VERSION.pack(self.version) + np.asarray(self.weights, dtype="<f8").tobytes()

    @staticmethod
    def decode(value: bytes) -> Tuple[int, np.ndarray]:
        """(version, weights) of a KV value"""
        (version,) = VERSION.unpack_from(value)
        return version, np.frombuffer(value[VERSION.size :], dtype="<f8")


def sgd_worker(payload: bytes, ctx: InvocationContext) -> bytes:
    """
    Entry point. Runs `steps` publishes and returns the (version, loss)
    pairs it published, or stops early once the loss diverges.
    """
    spec = json.loads(payload)
    with ctx.timing("input"):
        features, targets = decode_dataset(ctx.objects.get(spec["dataset_key"]))
    model_key = spec["model_key"]
    step_size = spec["step_size"]
    limit = spec["initial_loss"] * DIVERGENCE_FACTOR
    batch = spec.get("minibatch")
    flops = 4.0 * features.size
    published: Trajectory = []
    diverged = False
    for _ in range(spec["steps"]):
        while True:
            current = ctx.kv.get(model_key)
            version, weights = SgdModel.decode(current)
            if batch:
                rows = ctx.rng.choice(len(targets), size=batch, replace=False)
                updated = gradient_step(features[rows], targets[rows], weights, step_size)
            else:
                updated = gradient_step(features, targets, weights, step_size)
            ctx.charge_flops(flops)
            value = VERSION.pack(version + 1) + updated.astype("<f8").tobytes()
            if ctx.kv.cas(model_key, current, value):
                break
        published.append((version + 1, loss(features, targets, updated)))
        if not published[-1][1] <= limit:
            diverged = True
            break
    return json.dumps({"trajectory": published, "diverged": diverged}).encode("utf-8")


SGD_WORKER = FunctionDescriptor("sgd-worker", "1", sgd_worker)


# pylint: disable=too-many-arguments,too-many-locals
def hogwild_sgd(
    driver: Driver,
    dataset_key: KeyLike,
    workers: int,
    steps_per_worker: int,
    step_size: float,
    minibatch: Optional[int] = None,
    initial: Optional[np.ndarray] = None,
    config: Optional[JobConfig] = None,
) -> SgdModel:
    """
    Trains on the dataset object at `dataset_key` with `workers` parallel
    tasks of `steps_per_worker` publishes each. Raises Divergence when the
    loss of a published model exceeds ten times the initial loss.
    """
    features, targets = decode_dataset(driver.objects.object_get(dataset_key, driver.link))
    weights = np.zeros(features.shape[1]) if initial is None else np.asarray(initial, float)
    model = SgdModel(weights, step_size)
    if workers == 0 or steps_per_worker == 0:
        return model
    initial_loss = loss(features, targets, weights)
    job = driver.new_job_id()
    model_key = f"{SGD_NAMESPACE}/{job}/model"
    kv = driver.runtime.kv
    kv.kv_put(model_key, model.to_bytes(), driver.link)
    logger.info(
        f"sgd {job}: {workers} workers x {steps_per_worker} steps, "
        f"step size {step_size}, initial loss {initial_loss:.6g}"
    )
    payload = json.dumps(
        {
            "dataset_key": str(ObjectKey.of(dataset_key)),
            "model_key": model_key,
            "steps": steps_per_worker,
            "step_size": step_size,
            "initial_loss": initial_loss,
            "minibatch": minibatch,
        }
    ).encode("utf-8")
    function_id = driver.runtime.ensure_registered(SGD_WORKER)
    try:
        outputs = driver.results(driver.map(function_id, [payload] * workers, config))
        version, final = SgdModel.decode(kv.kv_get(model_key, driver.link))
    finally:
        kv.kv_delete(model_key, driver.link)

    trajectory: Trajectory = []
    diverged = False
    for output in outputs:
        report = json.loads(output)
        trajectory.extend((int(v), float(l)) for v, l in report["trajectory"])
        diverged = diverged or report["diverged"]
    trajectory.sort()
    if diverged or not np.all(np.isfinite(final)):
        raise Divergence(
            f"loss left {DIVERGENCE_FACTOR}x the initial {initial_loss:.6g}; "
            f"lower the step size {step_size}"
        )
    return SgdModel(final.copy(), step_size, version, trajectory)


def serial_gradient_descent(
    features: np.ndarray,
    targets: np.ndarray,
    steps: int,
    step_size: float,
    initial: Optional[np.ndarray] = None,
) -> SgdModel:
    """Single-process full-batch oracle of hogwild_sgd"""
    weights = np.zeros(features.shape[1]) if initial is None else np.asarray(initial, float)
    trajectory: Trajectory = []
    for version in range(1, steps + 1):
        weights = gradient_step(features, targets, weights, step_size)
        trajectory.append((version, loss(features, targets, weights)))
    return SgdModel(weights, step_size, steps, trajectory)
