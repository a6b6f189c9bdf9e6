"""Small shared helpers."""

from __future__ import annotations

import hashlib
import math

import numpy as np


def round_half_up(value: float) -> int:
    """Round to nearest integer, ties away from zero toward +inf."""
    return int(math.floor(value + 0.5))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Fold ``seed`` and a path of keys into one portable 64-bit sub-seed.

    String keys hash through SHA-256 (low 64 bits) so the derivation does not
    depend on Python's per-process hash randomization.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            digest = hashlib.sha256(key.encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "big"))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, np.uint64)[0])


def rng_from(seed: int, *keys: int | str) -> np.random.Generator:
    """PCG64 generator for ``(seed, *keys)``; same inputs give the same stream
    on every platform."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
