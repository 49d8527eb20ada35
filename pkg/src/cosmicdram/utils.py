from __future__ import annotations

import hashlib
import zlib
from collections.abc import Iterable
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def to_utc(dt: datetime) -> datetime:
    """
    Normalize a datetime to an aware UTC datetime with second resolution.

    Naive datetimes are interpreted as UTC.
    """
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    else:
        dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=0)


def parse_timestamp(token: str) -> datetime:
    """
    Parse an ISO-8601 timestamp, with optional offset or ``Z`` suffix, to UTC.

    Raises
    ------
    ValueError
        If the token is not a valid ISO-8601 timestamp.
    """
    token = token.strip()
    if not token:
        raise ValueError("empty timestamp")
    if token.endswith(("Z", "z")):
        token = token[:-1] + "+00:00"
    return to_utc(datetime.fromisoformat(token))


def format_timestamp(dt: datetime) -> str:
    return to_utc(dt).strftime(TIMESTAMP_FORMAT)


def to_epoch(dt: datetime) -> int:
    """Seconds since the Unix epoch of a (UTC) datetime."""
    return int(to_utc(dt).timestamp())


def epoch_array(dts: Iterable[datetime]) -> np.ndarray:
    return np.fromiter((to_epoch(dt) for dt in dts), dtype=np.int64)


def from_epoch(seconds: int | float) -> datetime:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)


def floor_hour(dt: datetime) -> datetime:
    return to_utc(dt).replace(minute=0, second=0)


def ceil_hour(dt: datetime) -> datetime:
    floored = floor_hour(dt)
    return floored if floored == to_utc(dt) else floored + timedelta(hours=1)


def stable_seed(*parts: int | str) -> list[int]:
    """
    Entropy for a numpy SeedSequence derived from integers and strings.

    Strings are hashed with crc32 so that the result does not depend on the
    interpreter hash randomization.
    """
    entropy = []
    for part in parts:
        if isinstance(part, str):
            entropy.append(zlib.crc32(part.encode()))
        else:
            entropy.append(int(part))
    return entropy


def file_digest(path: str | Path) -> str:
    """SHA-256 hex digest of a file."""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()
