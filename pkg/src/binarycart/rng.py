"""Deterministic seed derivation.

Every random draw in the package comes from a generator derived from a
``(master_seed, tag, index)`` triple, so results never depend on thread
scheduling or on the order in which independent streams are consumed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    """Root of a family of independent random streams."""

    master_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)) or self.master_seed < 0:
            raise ValueError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def _sequence(self, tag: str, index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(zlib.crc32(tag.encode()), int(index))
        )

    def generator(self, tag: str, index: int = 0) -> np.random.Generator:
        """Return a fresh numpy generator for the stream ``(tag, index)``."""
        return np.random.Generator(np.random.PCG64(self._sequence(tag, index)))

    def derive(self, tag: str, index: int = 0) -> "SeedSpec":
        """Return a child SeedSpec, independent of every other (tag, index)."""
        word = self._sequence(tag, index).generate_state(2, np.uint64)
        return SeedSpec((int(word[0]) << 64 | int(word[1])) & ((1 << 126) - 1))

    def word(self, tag: str, index: int = 0) -> int:
        """A single 63-bit integer for consumers that run their own hash."""
        return int(self._sequence(tag, index).generate_state(1, np.uint64)[0]) & (_MASK64 >> 1)


def as_seed(seed: "SeedSpec | int | None") -> SeedSpec:
    if seed is None:
        return SeedSpec(0)
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))
