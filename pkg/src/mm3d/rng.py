"""Portable seeded randomness.

Two pieces live here:

* ``SplitMix64``: a tiny 64-bit generator with a fully specified output
  sequence, used wherever the exact draw order is part of a contract (epoch
  orderings).  Reimplementing it in any language gives the same stream.
* ``derive_seed``: stable hashing of ``(seed, name, index, ...)`` into a child
  seed, so each subsystem gets an independent stream from the single user
  seed.

Weights and fixture values are drawn from ``numpy.random.default_rng`` seeded
with a derived seed; those only need to be reproducible within numpy.

SplitMix64 reference::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Bounded draws use rejection on ``2**64 mod n`` so they are unbiased, and
shuffles are Fisher-Yates from the last index down.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, TypeVar, Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")
SeedPart = Union[int, str]


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _part_to_u64(part: SeedPart) -> int:
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("seed parts must be int or str")
    return int(part) & MASK64


def derive_seed(seed: int, *parts: SeedPart) -> int:
    """Hash a root seed and a path of names/indices into a child seed.

    Strings are reduced with an 8-byte BLAKE2b digest (little endian); the
    chain is ``h = mix64(seed + GOLDEN)`` then ``h = mix64((h ^ part) + GOLDEN)``
    for every part.
    """
    h = mix64((_part_to_u64(seed) + GOLDEN) & MASK64)
    for part in parts:
        h = mix64(((h ^ _part_to_u64(part)) + GOLDEN) & MASK64)
    return h


class SplitMix64:
    """Sequential SplitMix64 stream."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) % n
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % n

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        out = list(range(n))
        self.shuffle(out)
        return out


def numpy_rng(seed: int, *parts: SeedPart) -> np.random.Generator:
    """A numpy Generator on the stream ``derive_seed(seed, *parts)``."""
    return np.random.default_rng(derive_seed(seed, *parts))
