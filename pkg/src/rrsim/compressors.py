"""Unbiased randomized compression operators with certified variance.

Each operator Q satisfies E[Q(x)] = x and E||Q(x) - x||^2 <= omega * ||x||^2.
The variance parameter omega is stored as its exact analytic value per kind
(never estimated): the theoretical stepsizes consume it and estimation noise
would corrupt them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Compressor",
    "identity",
    "rand_k",
    "dithering",
    "compress",
    "bits_sent",
    "verify_unbiased",
    "rand_k_enumerate",
    "UnbiasednessReport",
]


@dataclass(frozen=True)
class Compressor:
    """A stateless unbiased compressor; randomness comes from the caller."""

    kind: str  # identity | rand_k | dithering
    omega: float
    k: int | None = None
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "rand_k", "dithering"):
            raise ValueError(f"unknown compressor kind: {self.kind!r}")


def identity() -> Compressor:
    return Compressor("identity", omega=0.0)


def rand_k(k: int, d: int) -> Compressor:
    """Random-k sparsification: keep k of d coordinates, rescale by d/k."""
    if not (1 <= k <= d):
        raise ValueError(f"rand_k requires 1 <= k <= d, got k={k}, d={d}")
    return Compressor("rand_k", omega=d / k - 1.0, k=int(k))

def dithering(levels: int, d: int) -> Compressor:
    """Stochastic sign/norm/level compressor with s uniform levels.

    The recorded variance factor is the standard bound min(d/s^2, sqrt(d)/s).
    """
    if levels < 1:
        raise ValueError(f"dithering requires levels >= 1, got {levels}")
    s = int(levels)
    omega = min(d / s**2, math.sqrt(d) / s)
    return Compressor("dithering", omega=omega, levels=s)


def compress(c: Compressor, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply Q to a dense vector, drawing randomness from ``rng``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("compress expects a 1-d vector")
    d = x.shape[0]
    if c.kind == "identity":
        return x.copy()
    if c.kind == "rand_k":
        if c.k > d:
            raise ValueError(f"rand_k with k={c.k} on dimension d={d}")
        out = np.zeros(d)
        idx = rng.choice(d, size=c.k, replace=False)
        out[idx] = x[idx] * (d / c.k)
        return out
    # dithering
    r = float(np.linalg.norm(x))
    if r == 0.0:
        return np.zeros(d)
    s = c.levels
    u = np.abs(x) * (s / r)
    low = np.floor(u)
    level = low + (rng.random(d) < (u - low))
    return np.sign(x) * (level / s) * r


def bits_sent(c: Compressor, d: int) -> float:
    """Expected uplink bits for one compressed vector of dimension d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if c.kind == "identity":
        return 64.0 * d
    if c.kind == "rand_k":
        return c.k * (64.0 + math.ceil(math.log2(d)))
    return d * (1.0 + math.ceil(math.log2(c.levels + 1))) + 64.0


def rand_k_enumerate(c: Compressor, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact E[Q(x)] and E||Q(x)-x||^2 for rand-k by enumerating all subsets."""
    if c.kind != "rand_k":
        raise ValueError("enumeration is defined for rand_k only")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    scale = d / c.k
    mean = np.zeros(d)
    second = 0.0
    count = 0
    for subset in itertools.combinations(range(d), c.k):
        q = np.zeros(d)
        q[list(subset)] = x[list(subset)] * scale
        mean += q
        second += float(np.sum((q - x) ** 2))
        count += 1
    return mean / count, second / count


@dataclass(frozen=True)
class UnbiasednessReport:
    max_bias: float
    empirical_omega: float
    bias_bound: float
    omega_bound: float

    @property
    def ok(self) -> bool:
        return self.max_bias <= self.bias_bound and self.empirical_omega <= self.omega_bound


def verify_unbiased(
    c: Compressor,
    d: int,
    trials: int,
    rng: np.random.Generator,
    exhaustive: bool = False,
) -> UnbiasednessReport:
    """Empirically certify E[Q(x)] = x and the second-moment bound.

    Draws one random unit vector and either samples ``trials`` compressions or,
    for rand-k with ``exhaustive=True``, enumerates every coordinate subset
    (the sample estimates then become exact values).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = rng.standard_normal(d)
    x /= np.linalg.norm(x)
    if exhaustive:
        mean, second = rand_k_enumerate(c, x)
        bias_bound = 1e-12
        omega_bound = c.omega + 1e-12
    else:
        acc = np.zeros(d)
        second = 0.0
        for _ in range(trials):
            q = compress(c, x, rng)
            acc += q
            second += float(np.sum((q - x) ** 2))
        mean = acc / trials
        second /= trials
        bias_bound = 4.0 * math.sqrt(c.omega / trials) if c.omega > 0 else 1e-15
        omega_bound = c.omega * (1.0 + 5.0 / math.sqrt(trials)) if c.omega > 0 else 1e-15
    max_bias = float(np.max(np.abs(mean - x)))
    empirical_omega = second / float(np.sum(x * x))
    return UnbiasednessReport(max_bias, empirical_omega, bias_bound, omega_bound)
