"""Seeded synthetic dataset generators used by the experiments and tests."""

from __future__ import annotations

import numpy as np

from . import data
from .data import SparseDataset


def make_sparse_classification(
    m: int,
    d: int,
    nnz_per_row: int,
    seed: int = 0,
    margin: float = 0.0,
    noise: float = 0.0,
) -> SparseDataset:
    """Random sparse rows labeled by a hidden hyperplane.

    ``margin`` > 0 rejects rows whose normalized score is too close to the
    boundary, producing a linearly separable problem; ``noise`` flips each
    label with the given probability.
    """
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal(d)
    planted /= np.linalg.norm(planted)
    rows, labels = [], []
    while len(rows) < m:
        cols = rng.choice(d, size=min(nnz_per_row, d), replace=False)
        vals = rng.standard_normal(len(cols))
        score = float(planted[cols] @ vals) / np.sqrt(len(cols))
        if margin > 0.0 and abs(score) < margin:
            continue
        y = 1.0 if score >= 0 else -1.0
        if noise > 0.0 and rng.random() < noise:
            y = -y
        rows.append(list(zip(cols.tolist(), vals.tolist())))
        labels.append(y)
    return data.from_rows(rows, labels, d=d)


def make_imbalanced_shards(
    m_per_shard: int,
    d: int,
    nnz_per_row: int,
    pos_rates=(0.8, 0.2),
    seed: int = 0,
) -> SparseDataset:
    """Concatenated shards with different class balances.

    Shard k occupies rows [k * m_per_shard, (k+1) * m_per_shard), so a
    contiguous row partition into len(pos_rates) blocks reproduces the
    intended heterogeneous shards.  Feature 0 is a constant intercept, so
    class-balance differences genuinely shift the shard-local optima.
    """
    rng = np.random.default_rng(seed)
    pos_center = rng.standard_normal(d - 1) * 0.5
    rows, labels = [], []
    for rate in pos_rates:
        for _ in range(m_per_shard):
            y = 1.0 if rng.random() < rate else -1.0
            center = pos_center if y > 0 else -pos_center
            cols = rng.choice(d - 1, size=min(nnz_per_row, d - 1), replace=False)
            vals = center[cols] + rng.standard_normal(len(cols))
            row = [(0, 1.0)]
            row.extend((int(c) + 1, float(v)) for c, v in zip(cols, vals))
            rows.append(row)
            labels.append(y)
    return data.from_rows(rows, labels, d=d)


def fixture_4x3(seed: int = 5) -> SparseDataset:
    """A small fully-known dataset for hand-checkable objective values."""
    rows = [
        [(0, 1.0), (2, 2.0)],
        [(1, 0.5)],
        [(0, -1.5), (1, 1.0), (2, 0.25)],
        [(2, -0.75)],
    ]
    labels = [1.0, -1.0, 1.0, -1.0]
    return data.from_rows(rows, labels, d=3)
