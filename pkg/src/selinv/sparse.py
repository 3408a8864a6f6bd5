"""Sparse symmetric matrices, Matrix Market I/O and shifted matrices.

Indices are 0-based inside the package.  Matrix Market files (and every
other file format the package reads or writes) use 1-based indices.

A matrix flagged ``symmetric`` stores only its lower triangle (i >= j).
Complex matrices are complex *symmetric*: transposes never conjugate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp


class MatrixMarketError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""


class PatternError(ValueError):
    """A sparsity pattern requirement was violated at ``(row, col)`` (0-based)."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


@dataclass
class CoordMatrix:
    """Coordinate (triplet) form.  Duplicates are allowed until assembly."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    symmetric: bool = True
    comments: list = field(default_factory=list)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)


@dataclass
class CSCMatrix:
    """Compressed sparse column storage.

    With ``symmetric=True`` only entries with ``row >= col`` are stored.
    Row indices are strictly increasing within every column.
    """

    n: int
    colptr: np.ndarray
    rowind: np.ndarray
    values: np.ndarray
    symmetric: bool = True

    @property
    def nnz(self) -> int:
        return int(self.colptr[-1])

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def column(self, j: int):
        lo, hi = self.colptr[j], self.colptr[j + 1]
        return self.rowind[lo:hi], self.values[lo:hi]

    def to_scipy(self) -> sp.csc_matrix:
        """The stored entries only (lower triangle when symmetric)."""
        return sp.csc_matrix(
            (self.values, self.rowind, self.colptr), shape=(self.n, self.n)
        )

    def to_scipy_full(self) -> sp.csc_matrix:
        """Both triangles, keeping explicitly stored zeros."""
        m = self.to_scipy()
        if not self.symmetric:
            return m
        coo = m.tocoo()
        off = coo.row != coo.col
        rows = np.concatenate([coo.row, coo.col[off]])
        cols = np.concatenate([coo.col, coo.row[off]])
        vals = np.concatenate([coo.data, coo.data[off]])
        full = sp.coo_matrix((vals, (rows, cols)), shape=m.shape).tocsc()
        full.sort_indices()
        return full

    def to_dense(self) -> np.ndarray:
        return self.to_scipy_full().toarray()

    def full_nnz(self) -> int:
        """Number of stored entries of the full (two-triangle) matrix."""
        if not self.symmetric:
            return self.nnz
        coo = self.to_scipy().tocoo()
        return int(2 * self.nnz - np.count_nonzero(coo.row == coo.col))

    def to_coord(self) -> CoordMatrix:
        coo = self.to_scipy().tocoo()
        return CoordMatrix(
            self.n, coo.row.astype(np.int64), coo.col.astype(np.int64),
            coo.data.copy(), symmetric=self.symmetric,
        )

    def astype(self, dtype) -> "CSCMatrix":
        return CSCMatrix(self.n, self.colptr, self.rowind,
                         self.values.astype(dtype), self.symmetric)

    @classmethod
    def from_scipy(cls, m, symmetric: bool = True) -> "CSCMatrix":
        """Build from any scipy sparse matrix; keeps the lower triangle if symmetric."""
        m = sp.csc_matrix(m)
        if symmetric:
            m = sp.tril(m, format="csc")
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr.astype(np.int64),
                   m.indices.astype(np.int64), m.data.copy(), symmetric)

    @classmethod
    def from_dense(cls, a, symmetric: bool = True) -> "CSCMatrix":
        return cls.from_scipy(sp.csc_matrix(np.asarray(a)), symmetric=symmetric)

    @classmethod
    def identity(cls, n: int, dtype=float) -> "CSCMatrix":
        return cls(n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64),
                   np.ones(n, dtype=dtype), True)


@dataclass
class SparsityPattern:
    """Structure-only square matrix in CSC form (both triangles)."""

    n: int
    colptr: np.ndarray
    rowind: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.colptr[-1])

    def column(self, j: int) -> np.ndarray:
        return self.rowind[self.colptr[j]:self.colptr[j + 1]]

    def entries(self) -> set:
        cols = np.repeat(np.arange(self.n), np.diff(self.colptr))
        return set(zip(self.rowind.tolist(), cols.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        cols = np.repeat(np.arange(self.n), np.diff(self.colptr))
        out[self.rowind, cols] = True
        return out

    def is_symmetric(self) -> bool:
        d = self.to_scipy()
        return (d != d.T).nnz == 0

    def to_scipy(self) -> sp.csc_matrix:
        return sp.csc_matrix(
            (np.ones(self.nnz, dtype=bool), self.rowind, self.colptr),
            shape=(self.n, self.n),
        )

    @classmethod
    def from_scipy(cls, m) -> "SparsityPattern":
        m = sp.csc_matrix(m, dtype=bool)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr.astype(np.int64), m.indices.astype(np.int64))

    @classmethod
    def from_dense(cls, a) -> "SparsityPattern":
        return cls.from_scipy(sp.csc_matrix(np.asarray(a, dtype=bool)))


# ---------------------------------------------------------------------------
# Matrix Market
# ---------------------------------------------------------------------------

_FIELDS = ("real", "complex", "integer")
_SYMMETRIES = ("symmetric", "general")


def read_matrix_market(path) -> CoordMatrix:
    """Read a coordinate Matrix Market file.

    Symmetric files keep only the stored triangle; entries written in the
    upper triangle are mirrored into the lower one.  Pattern-only files are
    rejected because inventing values would corrupt accuracy checks.
    """
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError(f"{path}: malformed header {header.strip()!r}")
        obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError(f"{path}: only 'matrix coordinate' files are supported")
        if fld == "pattern":
            raise MatrixMarketError(f"{path}: pattern-only files carry no values")
        if fld not in _FIELDS:
            raise MatrixMarketError(f"{path}: unsupported field {fld!r}")
        if sym not in _SYMMETRIES:
            raise MatrixMarketError(f"{path}: unsupported symmetry {sym!r}")

        comments = []
        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            if line.startswith("%"):
                comments.append(line[1:].rstrip("\n"))
            line = fh.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise MatrixMarketError(f"{path}: malformed size line {line.strip()!r}") from None
        if nrows != ncols:
            raise MatrixMarketError(f"{path}: matrix is {nrows}x{ncols}, not square")

        width = 4 if fld == "complex" else 3
        body = [ln.split() for ln in fh if ln.strip() and not ln.startswith("%")]

    if len(body) != nnz:
        raise MatrixMarketError(f"{path}: expected {nnz} entries, found {len(body)}")
    if any(len(tok) != width for tok in body):
        raise MatrixMarketError(f"{path}: entries must have {width} fields")

    n = nrows
    if nnz:
        data = np.array(body, dtype=float).reshape(nnz, width)
        rows = data[:, 0].astype(np.int64) - 1
        cols = data[:, 1].astype(np.int64) - 1
        if fld == "complex":
            vals = data[:, 2] + 1j * data[:, 3]
        else:
            vals = data[:, 2].copy()
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=complex if fld == "complex" else float)

    bad = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise MatrixMarketError(
            f"{path}: entry ({rows[k] + 1},{cols[k] + 1}) out of range for n={n}"
        )

    symmetric = sym == "symmetric"
    if symmetric:
        upper = rows < cols
        rows[upper], cols[upper] = cols[upper], rows[upper].copy()
    return CoordMatrix(n, rows, cols, vals, symmetric=symmetric, comments=comments)


def _format_value(v, is_complex: bool) -> str:
    if is_complex:
        return f"{v.real:.17g} {v.imag:.17g}"
    return f"{v:.17g}"


def write_matrix_market(path, m: Union[CoordMatrix, CSCMatrix], comment: Optional[str] = None) -> None:
    """Write ``m`` as a coordinate Matrix Market file with 1-based indices."""
    if isinstance(m, CSCMatrix):
        m = m.to_coord()
    is_complex = m.is_complex
    fld = "complex" if is_complex else "real"
    sym = "symmetric" if m.symmetric else "general"
    lines = [f"%%MatrixMarket matrix coordinate {fld} {sym}"]
    if comment:
        lines.extend(f"% {c}" for c in comment.splitlines())
    lines.append(f"{m.n} {m.n} {m.nnz}")
    for i, j, v in zip(m.rows.tolist(), m.cols.tolist(), m.values.tolist()):
        lines.append(f"{i + 1} {j + 1} {_format_value(v, is_complex)}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Assembly and derived matrices
# ---------------------------------------------------------------------------

def coord_to_csc(m: CoordMatrix) -> CSCMatrix:
    """Assemble triplets into CSC: duplicates summed, rows sorted."""
    vals = np.asarray(m.values)
    dtype = complex if np.iscomplexobj(vals) else float
    coo = sp.coo_matrix(
        (vals.astype(dtype), (np.asarray(m.rows), np.asarray(m.cols))),
        shape=(m.n, m.n),
    )
    csc = coo.tocsc()
    csc.sum_duplicates()
    csc.sort_indices()
    return CSCMatrix(m.n, csc.indptr.astype(np.int64), csc.indices.astype(np.int64),
                     csc.data.astype(dtype), m.symmetric)


def _keys(m: CSCMatrix) -> np.ndarray:
    cols = np.repeat(np.arange(m.n, dtype=np.int64), np.diff(m.colptr))
    return cols * m.n + m.rowind


def build_shifted(H: CSCMatrix, S: Optional[CSCMatrix], z) -> CSCMatrix:
    """Return ``A = H - z*S`` on the pattern of ``H``.

    ``S=None`` stands for the identity.  The pattern of ``S`` must be
    contained in the pattern of ``H``; the result keeps every stored
    position of ``H`` even where the difference cancels to zero.
    """
    if S is None:
        S = CSCMatrix.identity(H.n)
    if S.n != H.n:
        raise ValueError(f"dimension mismatch: H is {H.n}, S is {S.n}")
    if S.symmetric != H.symmetric:
        raise ValueError("H and S must use the same symmetry storage")

    dtype = np.result_type(H.values.dtype, S.values.dtype, np.asarray(z).dtype)
    values = H.values.astype(dtype, copy=True)
    hkeys, skeys = _keys(H), _keys(S)
    pos = np.searchsorted(hkeys, skeys)
    pos_c = np.minimum(pos, max(len(hkeys) - 1, 0))
    missing = (pos >= len(hkeys)) | (hkeys[pos_c] != skeys) if len(hkeys) else np.ones(len(skeys), bool)
    if missing.any():
        k = int(np.flatnonzero(missing)[0])
        i, j = int(skeys[k] % H.n), int(skeys[k] // H.n)
        raise PatternError(f"S has entry ({i + 1},{j + 1}) outside the pattern of H", i, j)
    if z != 0:
        values[pos] -= z * S.values
    return CSCMatrix(H.n, H.colptr.copy(), H.rowind.copy(), values, H.symmetric)


def symmetrize_pattern(A: CSCMatrix) -> SparsityPattern:
    """Structural union of ``A`` and ``A.T``; values are discarded.

    For symmetric (lower) storage this expands the stored triangle into
    both triangles.  The diagonal appears only where it is stored.
    """
    m = sp.csc_matrix(
        (np.ones(A.nnz, dtype=np.int8), A.rowind, A.colptr), shape=(A.n, A.n)
    )
    u = (m + m.T).tocsc()
    return SparsityPattern.from_scipy(u)


def pattern_of(A: CSCMatrix) -> SparsityPattern:
    """Full structural pattern of ``A``, with the diagonal always included."""
    p = symmetrize_pattern(A).to_scipy().astype(np.int8)
    p = p + sp.identity(A.n, dtype=np.int8, format="csc")
    return SparsityPattern.from_scipy(p)
