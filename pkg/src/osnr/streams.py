"""Seeded random streams.

Every consumer of randomness (problem dynamics, sketch sampling, ...) gets its
own generator derived from ``(seed, label)``, so adding a consumer never shifts
the draws seen by another one.
"""
import zlib

import numpy as np


def derive_rng(seed, label):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, key]))
