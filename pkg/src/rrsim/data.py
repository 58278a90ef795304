"""Dataset ingestion and construction: LibSVM files, client partitioning,
and synthetic problems with controllable heterogeneity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objective import ClientDataset, DataPoint, FiniteSumProblem
from .rng import RngStream

__all__ = [
    "LibsvmParseError",
    "load_libsvm",
    "normalize_label",
    "PartitionRule",
    "partition",
    "make_synthetic",
]


class LibsvmParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def normalize_label(raw: str) -> float:
    """Map raw labels onto {-1, +1}.

    {0, 2, -1} map to -1 and {1, +1} to +1, which covers the usual binary
    corpora ({0,1}, {1,2}, {-1,+1}); any other value falls back to the sign
    rule (<= 0 means -1).
    """
    try:
        value = float(raw)
    except ValueError as exc:
        raise ValueError(f"unreadable label {raw!r}") from exc
    if value in (0.0, 2.0) or value < 0.0:
        return -1.0
    return 1.0


def load_libsvm(path) -> tuple[list[DataPoint], int]:
    """Parse a LibSVM text file into points; returns (points, d).

    Lines look like ``label idx:val idx:val ...`` with 1-based indices;
    d is the largest feature index seen.  Malformed lines raise
    LibsvmParseError carrying the line number.
    """
    points: list[DataPoint] = []
    max_index = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = normalize_label(tokens[0])
            except ValueError as exc:
                raise LibsvmParseError(lineno, str(exc)) from exc
            indices: list[int] = []
            values: list[float] = []
            for tok in tokens[1:]:
                if ":" not in tok:
                    raise LibsvmParseError(lineno, f"expected idx:val, got {tok!r}")
                idx_str, val_str = tok.split(":", 1)
                try:
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise LibsvmParseError(lineno, f"unreadable feature {tok!r}") from None
                if idx < 1:
                    raise LibsvmParseError(lineno, f"feature indices are 1-based, got {idx}")
                if indices and idx - 1 <= indices[-1]:
                    raise LibsvmParseError(lineno, "feature indices must be strictly increasing")
                indices.append(idx - 1)
                values.append(val)
                max_index = max(max_index, idx)
            points.append(DataPoint(tuple(indices), tuple(values), label))
    if not points:
        raise LibsvmParseError(0, "empty dataset file")
    return points, max_index


@dataclass(frozen=True)
class PartitionRule:
    kind: str  # sorted_equal_split | iid_shuffle_split
    M: int

    def __post_init__(self):
        if self.kind not in ("sorted_equal_split", "iid_shuffle_split"):
            raise ValueError(f"unknown partition rule {self.kind!r}")
        if self.M < 1:
            raise ValueError("M must be >= 1")


def partition(points: list[DataPoint], rule: PartitionRule, rng: np.random.Generator | None = None) -> list[ClientDataset]:
    """Split points across M clients: floor(N/M) per client, remainder to the
    last one.  ``sorted_equal_split`` stably sorts by label first;
    ``iid_shuffle_split`` shuffles with the supplied generator instead."""
    N = len(points)
    if N < rule.M:
        raise ValueError(f"cannot split {N} points across {rule.M} clients")
    if rule.kind == "sorted_equal_split":
        order = np.argsort([p.label for p in points], kind="stable")
    else:
        if rng is None:
            raise ValueError("iid_shuffle_split needs a random generator")
        order = rng.permutation(N)
    base = N // rule.M
    clients = []
    for m in range(rule.M):
        lo = m * base
        hi = (m + 1) * base if m < rule.M - 1 else N
        clients.append(ClientDataset(tuple(points[j] for j in order[lo:hi]), client_id=m))
    return clients


def _dense_point(row: np.ndarray, label: float) -> DataPoint:
    idx = tuple(int(j) for j in np.nonzero(row)[0])
    vals = tuple(float(row[j]) for j in idx)
    return DataPoint(idx, vals, label)


def make_synthetic(
    M: int,
    n: int,
    d: int,
    heterogeneity: float,
    kind: str = "logistic",
    lam: float = 0.0,
    seed: int = 0,
    row_norm: float = 2.0,
) -> FiniteSumProblem:
    """Synthetic problem with a dial from identical clients (0) to fully
    client-specific data (larger values).

    logistic: feature rows are shared anchors blended with client-specific
    noise, renormalized to ``row_norm`` (so L_max = row_norm^2/4 + 2 lam
    exactly); labels come from per-client teachers.  quadratic: summand
    centers are shared anchors plus a client offset scaled by the dial.
    """
    if kind not in ("logistic", "quadratic"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if heterogeneity < 0:
        raise ValueError("heterogeneity must be nonnegative")
    gen = RngStream(seed).child("synthetic").generator()
    h = float(heterogeneity)
    clients = []
    if kind == "logistic":
        anchors = gen.standard_normal((n, d))
        teacher = gen.standard_normal(d)
        for m in range(M):
            noise = gen.standard_normal((n, d))
            w_m = teacher + h * gen.standard_normal(d)
            rows = (1.0 - min(h, 1.0)) * anchors + h * noise
            norms = np.linalg.norm(rows, axis=1)
            norms[norms == 0.0] = 1.0
            rows = rows * (row_norm / norms[:, None])
            labels = np.where(rows @ w_m >= 0.0, 1.0, -1.0)
            clients.append(ClientDataset(
                tuple(_dense_point(rows[i], labels[i]) for i in range(n)), client_id=m,
            ))
        return FiniteSumProblem(clients, lam=lam, kind="logistic", d=d)
    anchors = gen.standard_normal((n, d))
    for m in range(M):
        offset = h * gen.standard_normal(d)
        rows = anchors + offset[None, :]
        labels = np.ones(n)
        clients.append(ClientDataset(
            tuple(_dense_point(rows[i], labels[i]) for i in range(n)), client_id=m,
        ))
    return FiniteSumProblem(clients, lam=0.0, kind="quadratic", d=d)
