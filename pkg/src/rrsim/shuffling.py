"""Sampling engines: per-epoch permutations, shuffle-once, with-replacement.

Minibatches are handled by partitioning the permuted index sequence into
floor(n/b) consecutive blocks; trailing remainder indices are dropped for the
epoch (a fresh permutation re-randomizes which ones next epoch).  Running an
epoch-based method with batches of size b is therefore running it on
n' = floor(n/b) averaged composite summands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream

__all__ = [
    "POLICIES",
    "BatchSchedule",
    "draw_permutation",
    "draw_with_replacement",
    "one_shot_permutation",
    "epoch_permutation",
    "batch_blocks",
]

POLICIES = ("rr_every_epoch", "rr_once", "with_replacement")


def draw_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of range(n) (Fisher-Yates from the stream)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.permutation(n)


def draw_with_replacement(n: int, b: int, rng: np.random.Generator) -> np.ndarray:
    """b i.i.d. uniform indices from range(n); duplicates allowed."""
    if n < 1 or b < 1:
        raise ValueError("n and b must be >= 1")
    return rng.integers(0, n, size=b)


def one_shot_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Permutation drawn once and reused for all epochs (shuffle-once policy)."""
    return draw_permutation(n, rng)


def epoch_permutation(stream: RngStream, client: int, epoch: int, n: int, policy: str) -> np.ndarray:
    """Client's permutation for the given epoch under the configured policy.

    The only difference between the two reshuffling policies is whether the
    epoch index enters the RNG path.
    """
    if policy == "rr_every_epoch":
        gen = stream.child(client, epoch, "perm").generator()
    elif policy == "rr_once":
        gen = stream.child(client, "perm-once").generator()
    else:
        raise ValueError(f"not a reshuffling policy: {policy!r}")
    return draw_permutation(n, gen)


@dataclass(frozen=True)
class BatchSchedule:
    """Partition of a permuted index sequence into equal consecutive blocks."""

    batch_size: int
    blocks: tuple[np.ndarray, ...]

    @property
    def steps(self) -> int:
        return len(self.blocks)


def batch_blocks(perm: np.ndarray, batch_size: int) -> BatchSchedule:
    n = len(perm)
    if not (1 <= batch_size <= n):
        raise ValueError(f"batch size must lie in [1, {n}], got {batch_size}")
    steps = n // batch_size
    blocks = tuple(perm[i * batch_size:(i + 1) * batch_size] for i in range(steps))
    return BatchSchedule(batch_size=batch_size, blocks=blocks)
