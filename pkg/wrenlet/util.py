"""Utility methods for package."""
from __future__ import annotations

import hashlib
import math
from datetime import datetime, timezone

from dateutil.parser import isoparse

# Virtual clocks count seconds from this instant so that job ids and trace
# timestamps stay reproducible across shaped runs.
VIRTUAL_EPOCH = datetime(2017, 1, 1, tzinfo=timezone.utc)

JOB_DATE_FORMAT = "%Y%m%dT%H%M%S"


def stable_hash(*parts: object) -> int:
    """64-bit hash that, unlike `hash()`, does not change between processes"""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(str(part).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "little")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp written by `format_timestamp`"""
    return isoparse(text)


def format_timestamp(moment: datetime) -> str:
    """ISO-8601 with microseconds, always in UTC"""
    return moment.astimezone(timezone.utc).isoformat(timespec="microseconds")


def parse_rate(text: str) -> float:
    """Parses a positive rate or size; `inf`/`unlimited` mean no limit."""
    lowered = text.strip().lower()
    if lowered in ("inf", "unlimited", "none"):
        return math.inf
    value = float(lowered)
    if value <= 0:
        raise ValueError(f"expected a positive value, got {text!r}")
    return value
