"""Counter-based random streams.

Each pipeline stage gets its own generator keyed by
``(master_seed, case_index, transform_index)`` through numpy's
``SeedSequence`` spawn keys, so a draw never depends on which other cases ran
before it or on how work was split across workers.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameter

UINT64_MAX = 2**64 - 1


def check_seed(seed, name: str = "seed") -> int:
    try:
        value = int(seed)
    except (TypeError, ValueError):
        raise InvalidParameter(f"{name} must be an integer, got {seed!r}") from None
    if value != seed and not isinstance(seed, str):
        raise InvalidParameter(f"{name} must be an integer, got {seed!r}")
    if not 0 <= value <= UINT64_MAX:
        raise InvalidParameter(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


def rng_stream(master_seed: int, case_index: int, transform_index: int, *extra: int) -> np.random.Generator:
    """Generator for one (case, transform) cell of a run."""
    key = (check_seed(case_index, "case_index"), check_seed(transform_index, "transform_index"))
    key += tuple(check_seed(e, "key") for e in extra)
    ss = np.random.SeedSequence(check_seed(master_seed, "master_seed"), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed))))
