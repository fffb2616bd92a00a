"""Row/column partitions over the nonzero support and the rotation schedule.

An epoch of the parallel engine consists of p phases; in phase r worker q
holds the primal block given by the rotation ``sigma(r, q, p)`` and updates
only the nonzeros falling in its (row block, held column block) rectangle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import SparseDataset

CONTIGUOUS = "contiguous"
GREEDY = "greedy"


def sigma(r: int, q: int, p: int) -> int:
    """Column block held by worker q in phase r (all 1-based; r wraps mod p)."""
    return (q + r - 2) % p + 1


def inverse_sigma(r: int, s: int, p: int) -> int:
    """The worker holding column block s in phase r."""
    return (s - r) % p + 1


def exchange_route(r: int, p: int) -> list[tuple[int, int]]:
    """(sender, receiver) pairs moving each held block to its phase-(r+1) holder."""
    return [(q, inverse_sigma(r + 1, sigma(r, q, p), p)) for q in range(1, p + 1)]


def _balanced_sizes(n: int, p: int) -> list[int]:
    base, extra = divmod(n, p)
    return [base + 1 if k < extra else base for k in range(p)]


def _contiguous_ids(n: int, p: int) -> np.ndarray:
    ids = np.empty(n, dtype=np.int64)
    start = 0
    for k, size in enumerate(_balanced_sizes(n, p)):
        ids[start : start + size] = k
        start += size
    return ids


def _greedy_col_ids(dataset: SparseDataset, p: int) -> np.ndarray:
    """Assign columns (heaviest first) to the lightest block with room left."""
    nnz_col = dataset.nnz_col
    capacity = _balanced_sizes(dataset.d, p)
    load = [0] * p
    fill = [0] * p
    ids = np.empty(dataset.d, dtype=np.int64)
    order = np.argsort(-nnz_col, kind="stable")
    for j in order:
        k = min(
            (b for b in range(p) if fill[b] < capacity[b]),
            key=lambda b: (load[b], b),
        )
        ids[j] = k
        load[k] += int(nnz_col[j])
        fill[k] += 1
    return ids


@dataclass(frozen=True)
class PartitionPlan:
    """p-way row and column blocks plus the p x p block index over the support.

    ``row_block_of`` / ``col_block_of`` map indices to 0-based block ids.
    ``blocks[q][r]`` holds the (i, j, x_ij) triples of rectangle (q, r) as
    three aligned arrays sorted by (i, j).
    """

    p: int
    row_block_of: np.ndarray
    col_block_of: np.ndarray
    blocks: list  # blocks[q][r] = (i_arr, j_arr, v_arr)

    @property
    def row_blocks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.row_block_of == k) for k in range(self.p)]

    @property
    def col_blocks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.col_block_of == k) for k in range(self.p)]

    @property
    def block_nnz(self) -> np.ndarray:
        return np.array(
            [[len(self.blocks[q][r][0]) for r in range(self.p)] for q in range(self.p)],
            dtype=np.int64,
        )

    def summary_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "block_nnz": self.block_nnz.tolist(),
                "row_block_sizes": [len(b) for b in self.row_blocks],
                "col_block_sizes": [len(b) for b in self.col_blocks],
            }
        )


def make_partition(
    dataset: SparseDataset, p: int, strategy: str = CONTIGUOUS
) -> PartitionPlan:
    if not 1 <= p <= min(dataset.m, dataset.d):
        raise ValueError(f"p={p} must be within [1, min(m, d)={min(dataset.m, dataset.d)}]")
    row_ids = _contiguous_ids(dataset.m, p)
    if strategy == CONTIGUOUS:
        col_ids = _contiguous_ids(dataset.d, p)
    elif strategy == GREEDY:
        col_ids = _greedy_col_ids(dataset, p)
    else:
        raise ValueError(f"unknown partition strategy {strategy!r}")

    bi = row_ids[dataset.row_index]
    bj = col_ids[dataset.row_cols]
    blocks = []
    # entries are already sorted by (i, j) in the row view
    flat = bi * p + bj
    for q in range(p):
        row_blocks = []
        for r in range(p):
            sel = np.flatnonzero(flat == q * p + r)
            row_blocks.append(
                (
                    dataset.row_index[sel].copy(),
                    dataset.row_cols[sel].copy(),
                    dataset.row_vals[sel].copy(),
                )
            )
        blocks.append(row_blocks)
    row_ids.flags.writeable = False
    col_ids.flags.writeable = False
    return PartitionPlan(p=p, row_block_of=row_ids, col_block_of=col_ids, blocks=blocks)
