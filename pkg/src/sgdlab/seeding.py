"""Deterministic seed derivation.

Every random stream in the package is a PCG64 generator seeded with a 64-bit
key derived from the user's master seed through splitmix64 mixing, so a
stream depends only on its position in the key tree, never on scheduling.

The mixer uses the public splitmix64 constants:
increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, shifts 30/27/31.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash64(*keys) -> int:
    """Fold integer (or string) keys into one 64-bit seed.

    For a fixed prefix the map from the last key to the output is injective,
    since splitmix64 is a bijection on 64-bit words.
    """
    h = 0x243F6A8885A308D3
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")
        h = splitmix64(h ^ (int(key) & MASK64))
    return h


def make_rng(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(hash64(*keys)))
