"""Reproducible per-replicate random streams.

Each replicate draws from its own counter-based Philox4x64 generator keyed by
``SeedSequence(base_seed, spawn_key=(replicate_id,))``, so replicates can run
in any order or on any worker and still produce the same numbers.  Kernels
consume raw 64-bit words; a word ``r`` selects item ``(r * k) >> 64`` out of
``k`` choices.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.Philox4x64-10/SeedSequence(base_seed, spawn_key=(replicate_id,))"


def make_stream(seed: int, replicate_id: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate_id),))
    return np.random.Generator(np.random.Philox(ss))


def raw_words(stream: np.random.Generator, size: int) -> np.ndarray:
    """Next ``size`` raw 64-bit outputs of ``stream`` as a uint64 array."""
    if size == 0:
        return np.zeros(0, dtype=np.uint64)
    return np.ascontiguousarray(stream.bit_generator.random_raw(size), dtype=np.uint64)


def choose(word: int, k: int) -> int:
    """Map one raw word to an index in ``range(k)``."""
    return (int(word) * k) >> 64


def metadata(seed: int) -> dict:
    return {"rng_algorithm": RNG_ALGORITHM, "base_seed": int(seed)}
