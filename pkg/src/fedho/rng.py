"""Deterministic derivation of independent random streams from one master seed.

Every stochastic component draws from its own generator, keyed by the master
seed plus a path of tags (strings or non-negative integers).  Keying instead
of sequential spawning keeps streams stable when parts of the simulation are
skipped or evaluated lazily.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def _key_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) % _U64
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed key must be int or str, got {type(key).__name__}")


def seed_sequence(*keys: int | str) -> np.random.SeedSequence:
    """SeedSequence derived from a path of keys; same keys, same sequence."""
    if not keys:
        raise ValueError("at least one seed key is required")
    return np.random.SeedSequence([_key_int(k) for k in keys])


def generator(*keys: int | str) -> np.random.Generator:
    """Fresh PCG64 generator for the stream identified by ``keys``."""
    return np.random.default_rng(seed_sequence(*keys))


def derived_seed(*keys: int | str) -> int:
    """Single u64 seed for APIs that take a plain integer."""
    return int(seed_sequence(*keys).generate_state(1, np.uint64)[0])
