"""Deterministic derivation of named random substreams.

Every random decision in the toolkit flows from a single integer seed
through `substream`. Substreams are identified by a path of names and
indices, so independent stages (and independent token positions) get
independent, reproducible generators regardless of execution order or
worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_part(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream path parts must be non-negative, got {part}")
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Generator for the substream named by `path`, derived from `seed`."""
    key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
