"""Deterministic random streams derived from a master seed and purpose keys.

Every consumer of randomness asks for a generator keyed by ``(seed, *keys)``.
Keys are hashed into a numpy ``SeedSequence`` spawn key, and the bit
generator is Philox, which is counter based. Streams for different keys are
independent, and the same key always gives the same stream, whatever order
the streams are requested in.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_words(key) -> tuple[int, ...]:
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Return an independent generator for ``seed`` and a tuple of purpose keys."""
    spawn_key: tuple[int, ...] = ()
    for key in keys:
        spawn_key += _key_words(key)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))
