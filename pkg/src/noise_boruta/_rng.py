"""Seed-stream derivation.

Every random draw in the package goes through :func:`derive_rng`, which maps a
master seed plus a path of keys (run index, iteration, tree, ...) to an
independent Philox stream. The mapping depends only on the path, so work can
be split across workers in any order and still reproduce the serial result.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"stream keys must be non-negative, got {part}")
    return int(part)


def seed_sequence(seed: int, *path: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(_key(p) for p in path))


def derive_rng(seed: int, *path: int | str) -> np.random.Generator:
    """Counter-based generator for the stream ``seed/path``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


def derive_seed(seed: int, *path: int | str) -> int:
    """A 64-bit child seed, for handing to code that wants a plain integer."""
    return int(seed_sequence(seed, *path).generate_state(1, dtype=np.uint64)[0])
