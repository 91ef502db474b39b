"""Counter-based random streams keyed on (master seed, experiment, worker)."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def stream(seed: int, *key) -> np.random.Generator:
    """Philox generator for ``seed`` and a key path such as ("kac", worker).

    Streams with different keys are independent; the same key always gives
    the same sequence.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def worker_streams(seed: int, experiment, workers: int) -> list:
    return [stream(seed, experiment, w) for w in range(workers)]


def split_counts(total: int, workers: int) -> list:
    """Split ``total`` samples into ``workers`` near-equal chunks (fixed order)."""
    base, extra = divmod(int(total), workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]
