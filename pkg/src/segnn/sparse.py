"""Compressed-sparse-row matrices, the carrier of normalized adjacencies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class CsrMatrix:
    """CSR storage. Column indices are strictly increasing within each row."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    _transpose_cache: "CsrMatrix | None" = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float64)
        self.validate()

    def validate(self):
        n_rows, n_cols = self.shape
        if len(self.indptr) != n_rows + 1:
            raise ValueError("indptr length must be rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.data):
            raise ValueError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be monotone")
        if len(self.indices) != len(self.data):
            raise ValueError("indices and data length mismatch")
        if len(self.indices) and (
            self.indices.min() < 0 or self.indices.max() >= n_cols
        ):
            raise ValueError("column index out of range")
        for r in range(n_rows):
            row_cols = self.indices[self.indptr[r] : self.indptr[r + 1]]
            if len(row_cols) > 1 and np.any(np.diff(row_cols) <= 0):
                raise ValueError(f"column indices not strictly increasing in row {r}")

    @property
    def nnz(self) -> int:
        return len(self.data)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "CsrMatrix":
        """Build from coordinate triplets; duplicate coordinates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            keep = np.ones(len(rows), dtype=bool)
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group_ids = np.cumsum(keep) - 1
            summed = np.zeros(group_ids[-1] + 1 if len(group_ids) else 0)
            np.add.at(summed, group_ids, vals)
            rows, cols, vals = rows[keep], cols[keep], summed
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(shape=tuple(shape), indptr=indptr, indices=cols, data=vals)

    @classmethod
    def from_dense(cls, arr) -> "CsrMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr)
        return cls.from_coo(rows, cols, arr[rows, cols], arr.shape)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(
            shape=(n, n),
            indptr=np.arange(n + 1, dtype=np.int64),
            indices=idx,
            data=np.ones(n),
        )

    @classmethod
    def block_diag(cls, blocks: "list[CsrMatrix]") -> "CsrMatrix":
        """Stack square blocks along the diagonal (batched-graph adjacency)."""
        if not blocks:
            raise ValueError("block_diag of zero blocks")
        row_off = 0
        col_off = 0
        indptr = [np.zeros(1, dtype=np.int64)]
        indices = []
        data = []
        nnz = 0
        for b in blocks:
            indptr.append(b.indptr[1:] + nnz)
            indices.append(b.indices + col_off)
            data.append(b.data)
            nnz += b.nnz
            row_off += b.shape[0]
            col_off += b.shape[1]
        return cls(
            shape=(row_off, col_off),
            indptr=np.concatenate(indptr),
            indices=np.concatenate(indices) if indices else np.zeros(0, np.int64),
            data=np.concatenate(data) if data else np.zeros(0),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for r in range(self.shape[0]):
            lo, hi = self.indptr[r], self.indptr[r + 1]
            out[r, self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def transpose(self) -> "CsrMatrix":
        if self._transpose_cache is None:
            row_ids = np.repeat(
                np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr)
            )
            self._transpose_cache = CsrMatrix.from_coo(
                self.indices, row_ids, self.data, (self.shape[1], self.shape[0])
            )
        return self._transpose_cache

    def matmul_dense(self, x: np.ndarray) -> np.ndarray:
        """Sparse @ dense. Row sums run left to right, so output is deterministic."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.shape[1]:
            raise ShapeError("spmm", self.shape, x.shape)
        out = np.zeros((self.shape[0], x.shape[1]))
        if self.nnz == 0:
            return out
        contrib = self.data[:, None] * x[self.indices]
        counts = np.diff(self.indptr)
        nonempty = counts > 0
        starts = self.indptr[:-1][nonempty]
        out[nonempty] = np.add.reduceat(contrib, starts, axis=0)
        return out
