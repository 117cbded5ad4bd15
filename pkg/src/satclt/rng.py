"""Seeded, splittable random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by the counter-based Philox bit generator.  Child streams are keyed
by hashing ``(master seed, purpose tag, index...)`` so that trial ``i`` of
an experiment sees the same numbers no matter how trials are scheduled
across workers.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, tag: str, *index: int) -> int:
    payload = "|".join([str(int(seed)), tag, *(str(int(i)) for i in index)])
    digest = hashlib.blake2b(payload.encode("ascii"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, tag: str = "", *index: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, tag, *index)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag, *index)))


def child(rng: np.random.Generator, tag: str, *index: int) -> np.random.Generator:
    """Derive a child stream from an existing generator.

    Consumes one 63-bit draw from ``rng`` as the child's master seed, so the
    result is a deterministic function of the parent's state.
    """
    seed = int(rng.integers(0, 2**63 - 1))
    return stream(seed, tag, *index)
