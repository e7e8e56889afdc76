"""Seed splitting.

Every (purpose, dataset, method) cell gets its own Philox stream derived from
the master seed by key, never by draw order, so cells can run in any order.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def derive_rng(seed, *keys):
    """Return an independent ``np.random.Generator`` for ``(seed, *keys)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed, *keys):
    """Return a 63-bit integer seed for ``(seed, *keys)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(0 if seed is None else seed)
