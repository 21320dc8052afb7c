"""Named random-stream derivation.

All randomness in a run flows from one 64-bit master seed. Independent
streams are derived by hashing the seed with a label path, so parallel
experiment cells and per-agent streams reproduce exactly regardless of
execution order.
"""

from __future__ import annotations

import hashlib
import random

import numpy as np


def derive_seed(master: int, *labels: str | int) -> int:
    """64-bit child seed for the stream named by `labels`."""
    tag = "|".join(str(part) for part in labels)
    digest = hashlib.sha256(f"cpmm-seed|{master}|{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(master: int, *labels: str | int) -> random.Random:
    return random.Random(derive_seed(master, *labels))


def np_stream(master: int, *labels: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
