"""Deterministic, path-addressed random streams.

Every source of randomness in a simulation is drawn from a stream identified
by a 64-bit seed plus a path of integers/labels (client id, epoch, step,
purpose).  Identical (seed, path) pairs always produce identical draw
sequences, regardless of the order in which streams are created or consumed,
so client work can be reordered or parallelized without changing results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream", "label_key"]


def label_key(name: str) -> int:
    """Map a purpose label to a stable 32-bit integer path component."""
    digest = hashlib.blake2s(name.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def _as_key(part: int | str) -> int:
    if isinstance(part, str):
        return label_key(part)
    if part < 0:
        raise ValueError(f"path components must be nonnegative, got {part}")
    return int(part)


@dataclass(frozen=True)
class RngStream:
    """A (seed, path)-addressed stream of random draws.

    ``child`` derives substreams by appending path components; ``generator``
    instantiates a fresh ``numpy.random.Generator`` at this address.  Two
    streams with distinct paths are statistically independent (Philox keyed
    through ``SeedSequence``).
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def child(self, *parts: int | str) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(_as_key(p) for p in parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))
