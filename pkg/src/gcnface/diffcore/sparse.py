"""Sparse matrices in coordinate form.

Values are constants with respect to differentiation: the graph operators
built from mesh connectivity (Laplacians, sampling matrices) are fixed
during training, so only the dense operand of a sparse-dense product
carries gradients.  Products are delegated to a cached scipy CSR view.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ContractViolation


class SparseMatrix:
    """COO triplets plus shape, with a cached CSR form for products.

    Invariants checked on construction: indices in range, no duplicate
    (row, col) pairs, float64 values.
    """

    __slots__ = ("rows", "cols", "row_idx", "col_idx", "values", "_csr")

    def __init__(self, rows: int, cols: int, row_idx, col_idx, values):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_idx = np.asarray(row_idx, dtype=np.int64).ravel()
        self.col_idx = np.asarray(col_idx, dtype=np.int64).ravel()
        self.values = np.asarray(values, dtype=np.float64).ravel()
        if not (len(self.row_idx) == len(self.col_idx) == len(self.values)):
            raise ContractViolation("triplet arrays must have equal length")
        if self.rows < 0 or self.cols < 0:
            raise ContractViolation("matrix dimensions must be non-negative")
        if len(self.row_idx):
            if self.row_idx.min() < 0 or self.row_idx.max() >= self.rows:
                raise ContractViolation("row index out of range")
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.cols:
                raise ContractViolation("column index out of range")
            flat = self.row_idx * self.cols + self.col_idx
            if len(np.unique(flat)) != len(flat):
                raise ContractViolation("duplicate (row, col) entry")
        self._csr = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, (self.row_idx, self.col_idx)),
                shape=(self.rows, self.cols),
            )
        return self._csr

    def matmul_dense(self, x: np.ndarray) -> np.ndarray:
        """Product with a dense (cols, k) or (cols,) array."""
        if x.shape[0] != self.cols:
            raise ContractViolation(
                f"sparse ({self.rows}x{self.cols}) @ dense {x.shape}: "
                "inner dimensions differ"
            )
        return np.asarray(self.csr() @ x, dtype=np.float64)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(
            self.cols, self.rows, self.col_idx, self.row_idx, self.values
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.values
        return out

    @staticmethod
    def from_dense(a: np.ndarray, tol: float = 0.0) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ContractViolation("from_dense expects a 2-D array")
        r, c = np.nonzero(np.abs(a) > tol)
        return SparseMatrix(a.shape[0], a.shape[1], r, c, a[r, c])

    @staticmethod
    def identity(n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return SparseMatrix(n, n, idx, idx, np.ones(n))

    def __repr__(self) -> str:
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def save_triplets(path, m: SparseMatrix) -> None:
    """Write a sparse matrix in the plain text triplet format.

    Line 1: ``rows cols nnz``.  Each following line: ``row col value``
    with the value in full-precision repr.  Entries are sorted by (row,
    col) so the file is a canonical form.
    """
    order = np.lexsort((m.col_idx, m.row_idx))
    with open(path, "w") as f:
        f.write(f"{m.rows} {m.cols} {m.nnz}\n")
        for i in order:
            f.write(f"{m.row_idx[i]} {m.col_idx[i]} {float(m.values[i])!r}\n")


def load_triplets(path) -> SparseMatrix:
    from ..errors import FormatError

    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError("empty triplet file", offset=1)
    head = lines[0].split()
    if len(head) != 3:
        raise FormatError("header must be 'rows cols nnz'", offset=1)
    try:
        rows, cols, nnz = (int(x) for x in head)
    except ValueError:
        raise FormatError("non-integer header field", offset=1) from None
    if len(lines) - 1 < nnz:
        raise FormatError(
            f"expected {nnz} entries, file has {len(lines) - 1}", offset=len(lines)
        )
    ri = np.empty(nnz, dtype=np.int64)
    ci = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    for k in range(nnz):
        parts = lines[1 + k].split()
        if len(parts) != 3:
            raise FormatError("entry must be 'row col value'", offset=2 + k)
        try:
            ri[k], ci[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError("malformed entry", offset=2 + k) from None
    return SparseMatrix(rows, cols, ri, ci, vals)
