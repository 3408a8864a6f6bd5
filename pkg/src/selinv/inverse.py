"""Sequential selected inversion and what can be computed from its output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import kernels
from .factor import BlockFactor, FactorStateError
from .ordering import Permutation
from .sparse import CoordMatrix, CSCMatrix, PatternError
from .symbolic import BlockPattern


class NotComputedError(KeyError):
    """The requested entry of the inverse lies outside the computed block pattern."""


@dataclass
class SelectedInverse:
    """Entries of ``inv(A)`` on the block pattern of ``L`` and ``U``.

    Storage mirrors :class:`BlockFactor`: ``diag[K]`` is the dense block
    ``inv(A)[K, K]``, ``lower[K]`` stacks the blocks ``inv(A)[I, K]`` and
    ``upper[K]`` their transposes ``inv(A)[K, I]``.  Indices inside the
    blocks refer to the permuted matrix; ``perm`` maps back.
    """

    bp: BlockPattern
    perm: Permutation
    diag: List[np.ndarray]
    lower: List[np.ndarray]
    upper: List[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.bp.n

    @property
    def dtype(self):
        return self.diag[0].dtype if self.diag else np.dtype(float)

    def _span(self, K: int, b: int) -> slice:
        ptr = self.bp.block_ptr[K]
        return slice(int(ptr[b]), int(ptr[b + 1]))

    def block(self, I: int, J: int) -> np.ndarray:
        """Block ``(I, J)`` of the inverse in permuted numbering (a view)."""
        if I == J:
            return self.diag[I]
        if I > J:
            return self.lower[J][self._span(J, self.bp.block_index(J, I))]
        return self.upper[I][:, self._span(I, self.bp.block_index(I, J))]

    def _lookup_permuted(self, pi: np.ndarray, pj: np.ndarray) -> np.ndarray:
        part = self.bp.partition
        r = np.maximum(pi, pj)
        c = np.minimum(pi, pj)
        out = np.empty(len(r), dtype=self.dtype)
        Ks = part.col_to_sup[c]
        Is = part.col_to_sup[r]
        order = np.argsort(Ks, kind="stable")
        bounds = np.searchsorted(Ks[order], np.arange(self.bp.count + 1))
        for K in range(self.bp.count):
            sel = order[bounds[K]:bounds[K + 1]]
            if len(sel) == 0:
                continue
            f = part.first(K)
            same = Is[sel] == K
            d = sel[same]
            out[d] = self.diag[K][r[d] - f, c[d] - f]
            o = sel[~same]
            if len(o):
                rows = self.bp.rows[K]
                pos = np.searchsorted(rows, r[o])
                ok = pos < len(rows)
                ok[ok] = rows[pos[ok]] == r[o][ok]
                if not ok.all():
                    k = int(o[np.flatnonzero(~ok)[0]])
                    orig = (int(self.perm.perm[pi[k]]), int(self.perm.perm[pj[k]]))
                    raise NotComputedError(
                        f"entry ({orig[0] + 1},{orig[1] + 1}) was not computed by selected inversion"
                    )
                out[o] = self.lower[K][pos, c[o] - f]
        return out

    def extract(self, rows, cols) -> np.ndarray:
        """Entries at original (0-based) positions ``(rows[k], cols[k])``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if len(rows) == 0:
            return np.zeros(0, dtype=self.dtype)
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n:
            raise IndexError("position out of range")
        return self._lookup_permuted(self.perm.inverse[rows], self.perm.inverse[cols])

    def positions(self):
        """All computed lower-triangle positions in original numbering."""
        part = self.bp.partition
        rr, cc = [], []
        for K in range(self.bp.count):
            cols = np.arange(part.first(K), part.last(K) + 1)
            i, j = np.tril_indices(len(cols))
            rr.append(cols[i])
            cc.append(cols[j])
            rows = self.bp.rows[K]
            rr.append(np.repeat(rows, len(cols)))
            cc.append(np.tile(cols, len(rows)))
        pr = np.concatenate(rr) if rr else np.zeros(0, np.int64)
        pc = np.concatenate(cc) if cc else np.zeros(0, np.int64)
        oi, oj = self.perm.perm[pr], self.perm.perm[pc]
        return np.maximum(oi, oj), np.minimum(oi, oj)

    def to_coord(self) -> CoordMatrix:
        """Every computed lower-triangle entry in original numbering."""
        i, j = self.positions()
        order = np.lexsort((i, j))
        i, j = i[order], j[order]
        return CoordMatrix(self.n, i, j, self.extract(i, j), symmetric=True)

    def to_dense_restricted(self) -> np.ndarray:
        """Dense matrix holding the computed entries, zero elsewhere (tests)."""
        out = np.zeros((self.n, self.n), dtype=self.dtype)
        i, j = self.positions()
        v = self.extract(i, j)
        out[i, j] = v
        out[j, i] = v
        return out


def piece_index(bp: BlockPattern, J: int, I: int, rows_j: np.ndarray, rows_i: np.ndarray):
    """Local indices of ``inv(A)[rows_j, rows_i]`` inside the stored block ``(J, I)``."""
    part = bp.partition
    if J == I:
        f = part.first(I)
        return rows_j - f, rows_i - f
    if J > I:
        stored = bp.block_rows(I, J)
        return np.searchsorted(stored, rows_j), rows_i - part.first(I)
    stored = bp.block_rows(J, I)
    return rows_j - part.first(J), np.searchsorted(stored, rows_i)


def selected_inversion(F: BlockFactor, perm: Optional[Permutation] = None,
                       access_log: Optional[Callable[[int, int, int], None]] = None) -> SelectedInverse:
    """Selected inversion from a normalized supernodal factor.

    Supernodes are visited from the last to the first.  For supernode ``K``
    with off-diagonal block rows ``C``::

        inv(A)[C, K] = -inv(A)[C, C] @ L^[C, K]
        inv(A)[K, K] = inv(U_KK) inv(L_KK) - L^[C, K].T @ inv(A)[C, K]

    followed by symmetrization of the diagonal block and mirroring of the
    off-diagonal blocks.  Only blocks ``(J, I)`` with ``J, I`` in ``C`` are
    read; ``access_log(K, J, I)`` is called for each of those reads.  The
    factor itself is left untouched.
    """
    if not F.normalized:
        raise FactorStateError("selected inversion needs a normalized factor")
    bp = F.bp
    N = bp.count
    if perm is None:
        perm = Permutation.identity(bp.n)
    S = SelectedInverse(
        bp, perm, [None] * N,
        [np.empty_like(F.lower[K]) for K in range(N)],
        [np.empty_like(F.upper[K]) for K in range(N)],
    )
    for K in range(N - 1, -1, -1):
        C = [int(I) for I in bp.block_sups[K]]
        R = [rows for _, rows in bp.blocks(K)]
        lhat = [F.lower_block(K, b) for b in range(len(C))]
        ainv = []
        for jb, J in enumerate(C):
            terms = []
            for ib, I in enumerate(C):
                if access_log is not None:
                    access_log(K, J, I)
                ri, ci = piece_index(bp, J, I, R[jb], R[ib])
                piece = kernels.take(S.block(J, I), ri, ci)
                terms.append(kernels.gemm(piece, lhat[ib]))
            ainv.append(-kernels.reduce_terms(terms))
        d = kernels.diag_inverse(F.diag[K])
        if C:
            d = d - kernels.reduce_terms(
                [kernels.gemm(lhat[jb].T, ainv[jb]) for jb in range(len(C))]
            )
        S.diag[K] = kernels.symmetrize(d)
        for jb in range(len(C)):
            span = S._span(K, jb)
            S.lower[K][span] = ainv[jb]
            S.upper[K][:, span] = kernels.transpose_copy(ainv[jb])
    return S


def _full_entries(B: CSCMatrix):
    full = B.to_scipy_full().tocoo()
    return full.row.astype(np.int64), full.col.astype(np.int64), full.data


def trace_product(S: SelectedInverse, B: CSCMatrix):
    """``Tr[inv(A) B.T] = sum over B[i,j] != 0 of inv(A)[i,j] * B[i,j]``.

    ``B`` is in original numbering; its pattern must lie in the computed set.
    """
    if B.n != S.n:
        raise ValueError(f"dimension mismatch: {B.n} vs {S.n}")
    i, j, v = _full_entries(B)
    try:
        vals = S.extract(i, j)
    except NotComputedError as exc:
        raise PatternError(f"B is not contained in the computed pattern: {exc}") from None
    total = np.sum(vals * v)
    return total.item()


def accuracy_metric(S: SelectedInverse, A: CSCMatrix) -> float:
    """``E = |N - Tr[inv(A) A]| / N`` using only the stored entries of ``A``."""
    i, j, v = _full_entries(A)
    # A is symmetric, so A[j, i] == A[i, j]
    vals = S.extract(i, j)
    return float(abs(1.0 - np.sum(vals * v) / A.n))


def extract_entries(S: SelectedInverse, positions) -> np.ndarray:
    """Values of ``inv(A)`` at original (0-based) ``(i, j)`` positions."""
    positions = list(positions)
    if not positions:
        return np.zeros(0, dtype=S.dtype)
    rows, cols = zip(*positions)
    return S.extract(rows, cols)
