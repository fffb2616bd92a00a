"""Sparse training data: loading, label folding, and nonzero-support indexing.

The design matrix is kept in both row-major and column-major form because
the coordinate updates need per-row and per-column nonzero counts, and the
objective evaluations need fast row dots (row view) and fast per-feature
correlations (column view).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    """Base class for dataset construction problems."""


class ParseError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(DataError):
    pass


class AlreadyFoldedError(DataError):
    pass


class BinaryLabelsRequiredError(DataError):
    pass


@dataclass(frozen=True)
class DatasetStats:
    m: int
    d: int
    nnz_total: int
    density: float
    max_row_nnz: int
    max_col_nnz: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "d": self.d,
                "nnz": self.nnz_total,
                "density": self.density,
                "max_row_nnz": self.max_row_nnz,
                "max_col_nnz": self.max_col_nnz,
            }
        )


@dataclass(frozen=True)
class SparseDataset:
    """Immutable sparse dataset with aligned row and column views.

    Row view: ``row_ptr`` (length m+1) delimits segments of ``row_cols`` /
    ``row_vals``.  ``row_index`` carries the owning row of each stored entry,
    aligned with the row view.  Column view: ``col_ptr`` (length d+1) over
    ``col_rows`` / ``col_vals``.  Both views index the identical nonzero set.
    """

    m: int
    d: int
    row_ptr: np.ndarray
    row_cols: np.ndarray
    row_vals: np.ndarray
    row_index: np.ndarray
    col_ptr: np.ndarray
    col_rows: np.ndarray
    col_vals: np.ndarray
    labels: np.ndarray
    folded: bool = False
    _frozen: bool = field(default=True, repr=False)

    @property
    def nnz_total(self) -> int:
        return int(self.row_vals.size)

    @property
    def nnz_row(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @property
    def nnz_col(self) -> np.ndarray:
        return np.diff(self.col_ptr)

    def row(self, i):
        """(feature indices, values) of row i."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.row_cols[lo:hi], self.row_vals[lo:hi]

    def has_entry(self, i, j) -> bool:
        """True iff x_ij is a stored nonzero."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        k = lo + np.searchsorted(self.row_cols[lo:hi], j)
        return k < hi and self.row_cols[k] == j

    def entry(self, i, j) -> float:
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        k = lo + np.searchsorted(self.row_cols[lo:hi], j)
        if k >= hi or self.row_cols[k] != j:
            raise KeyError((i, j))
        return float(self.row_vals[k])

    def dots(self, w: np.ndarray) -> np.ndarray:
        """Row-wise inner products <w, x_i> for all i."""
        prod = self.row_vals * w[self.row_cols]
        return np.bincount(self.row_index, weights=prod, minlength=self.m)


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


def _build(m, d, row_ptr, row_cols, row_vals, labels, folded=False) -> SparseDataset:
    row_ptr = np.asarray(row_ptr, dtype=np.int64)
    row_cols = np.asarray(row_cols, dtype=np.int64)
    row_vals = np.asarray(row_vals, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    row_index = np.repeat(np.arange(m, dtype=np.int64), np.diff(row_ptr))
    order = np.lexsort((row_index, row_cols))
    col_rows = row_index[order]
    col_vals = row_vals[order]
    col_ptr = np.zeros(d + 1, dtype=np.int64)
    np.cumsum(np.bincount(row_cols, minlength=d), out=col_ptr[1:])
    _freeze(row_ptr, row_cols, row_vals, row_index, col_ptr, col_rows, col_vals, labels)
    return SparseDataset(
        m=m,
        d=d,
        row_ptr=row_ptr,
        row_cols=row_cols,
        row_vals=row_vals,
        row_index=row_index,
        col_ptr=col_ptr,
        col_rows=col_rows,
        col_vals=col_vals,
        labels=labels,
        folded=folded,
    )


def from_rows(rows, labels, d=None, folded=False) -> SparseDataset:
    """Build a dataset from a list of [(feature, value), ...] rows (0-based)."""
    m = len(rows)
    if m == 0:
        raise EmptyDatasetError("no rows")
    ptr = [0]
    cols, vals = [], []
    max_j = -1
    for r in rows:
        r = sorted(r)
        for j, v in r:
            cols.append(j)
            vals.append(v)
            max_j = max(max_j, j)
        ptr.append(len(cols))
    if d is None:
        d = max_j + 1
    return _build(m, d, ptr, cols, vals, labels, folded=folded)


def parse_libsvm(source, task="classification", d=None) -> SparseDataset:
    """Parse text in the conventional sparse format: ``label idx:val ...``.

    Indices on disk are 1-based; internal storage is 0-based.  For
    classification, labels in {0, -1} map to -1 and {1, +1} map to +1.
    Lines that are empty or start with '#' are skipped.  No feature
    scaling or normalization is performed.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    ptr = [0]
    cols, vals, labels = [], [], []
    max_j = -1
    for line_no, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            y = float(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"bad label {tokens[0]!r}") from None
        if not math.isfinite(y):
            raise ParseError(line_no, "non-finite label")
        if task == "classification":
            if y in (0.0, -1.0):
                y = -1.0
            elif y == 1.0:
                y = 1.0
            else:
                raise ParseError(line_no, f"label {y} is not binary")
        labels.append(y)
        seen = set()
        entries = []
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(line_no, f"malformed token {tok!r}")
            try:
                j = int(idx)
                v = float(val)
            except ValueError:
                raise ParseError(line_no, f"malformed token {tok!r}") from None
            if j < 1:
                raise ParseError(line_no, f"feature index {j} must be >= 1")
            if not math.isfinite(v):
                raise ParseError(line_no, f"non-finite value in token {tok!r}")
            if j - 1 in seen:
                raise ParseError(line_no, f"duplicate feature index {j}")
            if v == 0.0:
                continue  # explicit zeros are not part of the support
            seen.add(j - 1)
            entries.append((j - 1, v))
        entries.sort()
        for j, v in entries:
            cols.append(j)
            vals.append(v)
            max_j = max(max_j, j)
        ptr.append(len(cols))
    if not labels:
        raise EmptyDatasetError("no data lines in input")
    width = max_j + 1
    if d is not None:
        if d < width:
            raise DataError(f"declared d={d} smaller than observed {width}")
        width = d
    return _build(len(labels), width, ptr, cols, vals, labels)


def write_libsvm(dataset: SparseDataset, stream) -> None:
    """Serialize to the 1-based on-disk text format."""
    for i in range(dataset.m):
        js, vs = dataset.row(i)
        parts = [format(dataset.labels[i], "g")]
        parts.extend(f"{j + 1}:{v!r}" for j, v in zip(js.tolist(), vs.tolist()))
        stream.write(" ".join(parts) + "\n")


def fold_labels(dataset: SparseDataset) -> SparseDataset:
    """Scale each row by its label and set all labels to +1.

    After folding, margin-form losses l(u) with u = <w, x_i> are equivalent
    to l(y <w, x>) on the original data.  Only valid for binary labels.
    """
    if dataset.folded:
        raise AlreadyFoldedError("labels already folded into the data")
    if not np.all(np.abs(dataset.labels) == 1.0):
        raise BinaryLabelsRequiredError("folding requires labels in {-1,+1}")
    scaled = dataset.row_vals * dataset.labels[dataset.row_index]
    return _build(
        dataset.m,
        dataset.d,
        dataset.row_ptr,
        dataset.row_cols,
        scaled,
        np.ones(dataset.m),
        folded=True,
    )


def dataset_stats(dataset: SparseDataset) -> DatasetStats:
    nnz_row = dataset.nnz_row
    nnz_col = dataset.nnz_col
    return DatasetStats(
        m=dataset.m,
        d=dataset.d,
        nnz_total=dataset.nnz_total,
        density=dataset.nnz_total / (dataset.m * dataset.d),
        max_row_nnz=int(nnz_row.max()) if nnz_row.size else 0,
        max_col_nnz=int(nnz_col.max()) if nnz_col.size else 0,
    )
