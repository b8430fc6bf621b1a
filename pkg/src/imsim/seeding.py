"""Seed splitting.

Every random draw in the package goes through :func:`rng_for`, which maps a
master seed, a purpose tag and an optional index to an independent
``numpy.random.Generator``::

    entropy = [master_seed, crc32(purpose), *indices]
    rng     = numpy.random.default_rng(SeedSequence(entropy))

Purposes in use: ``channel``, ``noise``, ``pilot``, ``interference``,
``interferer-data``, ``reference``, ``stale``, ``init``, ``shuffle``, ``bits``,
``interleaver``, ``code``, ``split``, ``train-sinr``, ``sinr-point`` and the
per-command tags used by the bench CLI. Changing how one purpose consumes
randomness never perturbs another.
"""
from __future__ import annotations

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def rng_for(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, purpose_key(purpose)]
    entropy.extend(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def subseed(seed: int, purpose: str, *indices: int) -> int:
    """Derive a plain integer seed (for objects that take an int)."""
    return int(rng_for(seed, purpose, *indices).integers(0, 2**31 - 1))
