"""Canonical structured-text encoding.

One serializer backs every hashed or signed record in the stack: UTF-8 JSON
with lexicographically sorted object keys, no insignificant whitespace, and
no NaN/Infinity. Identical logical records always produce identical bytes,
so SHA-256 over these bytes is a stable commitment.

Monetary amounts are emitted by callers as decimal strings at the record's
declared precision (see money.Money.format); timestamps as UTC ISO-8601 with
a Z suffix (see normalize_timestamp).
"""

from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone

_SCALARS = (str, int, float, bool, type(None))


class CanonicalError(ValueError):
    pass


def _validate(value, path: str) -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise CanonicalError(f"non-finite number at {path}")
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise CanonicalError(f"non-string key {key!r} at {path}")
            _validate(item, f"{path}.{key}")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _validate(item, f"{path}[{i}]")
    elif not isinstance(value, _SCALARS):
        raise CanonicalError(f"unrepresentable value of type {type(value).__name__} at {path}")


def canonical_bytes(value) -> bytes:
    """Canonical UTF-8 encoding of a JSON-shaped value."""
    _validate(value, "$")
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def canonical_loads(data: bytes | str):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def record_hash(value) -> str:
    """SHA-256 hex of the canonical encoding of `value`."""
    return sha256_hex(canonical_bytes(value))


def normalize_timestamp(value: str | int | float | datetime) -> str:
    """Normalize a timestamp to whole-second UTC ISO-8601 with Z suffix."""
    if isinstance(value, datetime):
        stamp = value
    elif isinstance(value, (int, float)):
        stamp = datetime.fromtimestamp(value, tz=timezone.utc)
    else:
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            stamp = datetime.fromisoformat(text)
        except ValueError as exc:
            raise CanonicalError(f"bad timestamp {value!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    stamp = stamp.astimezone(timezone.utc).replace(microsecond=0)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")
