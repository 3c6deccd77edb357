"""Stable seed derivation so stages and samples get independent RNG streams."""

from __future__ import annotations

import hashlib
import random


def derive_seed(root: int, *parts: object) -> int:
    """Hash ``root`` and ``parts`` into a 63-bit seed, stable across processes."""
    payload = "\x1f".join([str(int(root)), *map(str, parts)])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(root: int, *parts: object) -> random.Random:
    return random.Random(derive_seed(root, *parts))


def as_rng(rng: int | random.Random) -> random.Random:
    return rng if isinstance(rng, random.Random) else random.Random(rng)
