"""
Engine configuration: named profiles plus WRENLET_* overrides read from a
dotenv-style file.

    WRENLET_PROFILE=desk-shaped
    WRENLET_WRITE_BW=30e6
    WRENLET_OP_LATENCY=lognormal-median:0.02:0.5
    WRENLET_COLD_START=fixed:0.05
"""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from wrenlet.models import ConfigError
from wrenlet.runtime.limits import ColdStartModel, CrashPoint, FaultPlan, ResourceLimits
from wrenlet.storage.kv import DEFAULT_VALUE_CAP
from wrenlet.storage.shaping import LatencyDistribution, ShapingProfile
from wrenlet.runtime.executor import DEFAULT_COMPUTE_FLOPS
from wrenlet.util import parse_rate

logger = logging.getLogger(__name__)

CONFIG_ENV = "WRENLET_CONFIG"
PREFIX = "WRENLET_"
WALL = "wall"
VIRTUAL = "virtual"


# pylint: disable=too-many-instance-attributes
@dataclass(frozen=True)
class EngineConfig:
    """Everything needed to wire clock, storage, runtime and driver"""

    profile: str = "desk"
    clock: str = WALL
    shaping: ShapingProfile = field(default_factory=ShapingProfile.unshaped)
    limits: ResourceLimits = field(default_factory=ResourceLimits.desk)
    cold_start: ColdStartModel = field(default_factory=ColdStartModel)
    fault_plan: FaultPlan = field(default_factory=FaultPlan)
    pool_size: Optional[int] = None
    seed: int = 0
    kv_shards: int = 1
    kv_value_cap: int = DEFAULT_VALUE_CAP
    compute_flops: float = DEFAULT_COMPUTE_FLOPS
    backend: str = "memory"
    root: Optional[str] = None

    def __post_init__(self) -> None:
        if self.clock not in (WALL, VIRTUAL):
            raise ConfigError(f"clock must be {WALL} or {VIRTUAL}, got {self.clock!r}")
        if self.backend not in ("memory", "filesystem"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "filesystem" and not self.root:
            raise ConfigError("the filesystem backend needs WRENLET_ROOT")
        if self.kv_shards < 1 or self.kv_value_cap < 1 or self.seed < 0:
            raise ConfigError("kv_shards and kv_value_cap must be positive, seed nonnegative")
        if self.pool_size is not None and self.pool_size < 1:
            raise ConfigError(f"pool_size must be positive, got {self.pool_size}")

    @property
    def virtual(self) -> bool:
        """True when the engine runs on simulated time"""
        return self.clock == VIRTUAL

    def replace(self, **changes: object) -> EngineConfig:
        """Copy with `changes` applied"""
        return dataclasses.replace(self, **changes)  # type: ignore[arg-type]


def desk() -> EngineConfig:
    """Real time, unshaped storage, small limits"""
    return EngineConfig(profile="desk")


def desk_shaped() -> EngineConfig:
    """Virtual time with 2017 storage rates, small limits and instant starts"""
    return EngineConfig(
        profile="desk-shaped", clock=VIRTUAL, shaping=ShapingProfile.lambda_2017()
    )


def lambda_2017() -> EngineConfig:
    """Virtual time with 2017 rates, limits and heavy-tailed cold starts"""
    return EngineConfig(
        profile="lambda-2017",
        clock=VIRTUAL,
        shaping=ShapingProfile.lambda_2017(),
        limits=ResourceLimits.lambda_2017(),
        cold_start=ColdStartModel.lambda_2017(),
    )


PROFILES: Dict[str, Callable[[], EngineConfig]] = {
    "desk": desk,
    "desk-shaped": desk_shaped,
    "lambda-2017": lambda_2017,
}


def profile(name: str) -> EngineConfig:
    """The built-in profile `name`"""
    try:
        return PROFILES[name]()
    except KeyError as err:
        raise ConfigError(f"unknown profile {name!r}, choose from {sorted(PROFILES)}") from err


def _int(text: str) -> int:
    return int(float(text))


# Each override maps a WRENLET_ key to (section, field, parser).
_OVERRIDES: Dict[str, tuple] = {
    "CLOCK": ("engine", "clock", str),
    "POOL_SIZE": ("engine", "pool_size", _int),
    "SEED": ("engine", "seed", _int),
    "KV_SHARDS": ("engine", "kv_shards", _int),
    "KV_VALUE_CAP": ("engine", "kv_value_cap", _int),
    "COMPUTE_FLOPS": ("engine", "compute_flops", parse_rate),
    "BACKEND": ("engine", "backend", str),
    "ROOT": ("engine", "root", str),
    "READ_BW": ("shaping", "per_client_read_bw", parse_rate),
    "WRITE_BW": ("shaping", "per_client_write_bw", parse_rate),
    "OP_LATENCY": ("shaping", "op_latency", LatencyDistribution.parse),
    "KV_CLIENT_OPS": ("shaping", "kv_ops_per_client_per_sec", parse_rate),
    "KV_SHARD_OPS": ("shaping", "kv_shard_ops_per_sec", parse_rate),
    "AGGREGATE_BW": ("shaping", "aggregate_bw_cap", parse_rate),
    "KV_CLIENT_BW": ("shaping", "kv_client_bw", parse_rate),
    "KV_SHARD_BW": ("shaping", "kv_shard_bw", parse_rate),
    "MAX_RUNTIME": ("limits", "max_runtime", float),
    "MAX_MEMORY": ("limits", "max_memory", _int),
    "MAX_SCRATCH": ("limits", "max_scratch", _int),
    "COLD_START": ("cold_start", "distribution", LatencyDistribution.parse),
    "WARM_REUSE": ("cold_start", "warm_reuse_probability", float),
    "WARM_LATENCY": ("cold_start", "warm_latency", float),
    "CRASH_PROBABILITY": ("fault_plan", "crash_probability", float),
    "CRASH_POINT": ("fault_plan", "crash_point", CrashPoint),
    "RATE_LIMIT": ("fault_plan", "rate_limit", parse_rate),
}


def apply_overrides(config: EngineConfig, values: Mapping[str, Optional[str]]) -> EngineConfig:
    """Applies WRENLET_* `values` on top of `config`"""
    sections: Dict[str, Dict[str, object]] = {}
    for key, raw in values.items():
        if not key.startswith(PREFIX) or raw is None:
            continue
        name = key[len(PREFIX):]
        if name in ("PROFILE", "CONFIG"):
            continue
        if name not in _OVERRIDES:
            logger.warning(f"ignoring unknown setting {key}")
            continue
        section, attribute, parser = _OVERRIDES[name]
        try:
            sections.setdefault(section, {})[attribute] = parser(raw.strip())
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {raw!r} ({err})") from err
    try:
        engine_changes = sections.pop("engine", {})
        nested = {
            section: dataclasses.replace(getattr(config, section), **changes)
            for section, changes in sections.items()
        }
        return dataclasses.replace(config, **engine_changes, **nested)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid configuration: {err}") from err


def load_config(
    path: Optional[str] = None,
    profile_name: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> EngineConfig:
    """
    Builds the engine configuration. The config file is `path`, else the
    file named by $WRENLET_CONFIG; a .env file in the working directory is
    loaded into the environment first. The profile is `profile_name`, else
    WRENLET_PROFILE from the file or environment, else "desk". Settings in
    the file override WRENLET_* environment variables.
    """
    if environ is None:
        load_dotenv()
        environ = os.environ
    values: Dict[str, Optional[str]] = {k: v for k, v in environ.items() if k.startswith(PREFIX)}
    path = path or environ.get(CONFIG_ENV)
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} does not exist")
        logger.info(f"loading configuration from {path}")
        values.update(dotenv_values(path))
    name = profile_name or values.get(f"{PREFIX}PROFILE") or "desk"
    return apply_overrides(profile(name), values)
