"""Left-looking supernodal LU factorization without pivoting."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import kernels
from .kernels import PivotBreakdown
from .sparse import CSCMatrix
from .symbolic import BlockPattern


class FactorStateError(RuntimeError):
    pass


@dataclass
class FactorStats:
    nnz_a: int
    nnz_l: int
    supernodes: int
    flops: float
    update_flops: float
    min_pivot: float
    max_pivot: float


@dataclass
class BlockFactor:
    """Supernodal factor storage.

    ``diag[K]`` packs the unit lower ``L_KK`` (strict lower part) and the
    upper ``U_KK``.  ``lower[K]`` is the ``len(rows[K]) x s`` panel holding
    the blocks ``L[I, K]`` stacked in block order; ``upper[K]`` is the
    ``s x len(rows[K])`` panel of the mirror blocks ``U[K, I]``.  After
    :func:`normalize` the panels hold ``L^[I, K]`` and ``U^[K, I] = L^[I, K].T``.
    """

    bp: BlockPattern
    diag: List[np.ndarray]
    lower: List[np.ndarray]
    upper: List[np.ndarray]
    normalized: bool = False
    stats: FactorStats = None
    extra: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return self.diag[0].dtype if self.diag else np.dtype(float)

    def _span(self, K: int, b: int):
        ptr = self.bp.block_ptr[K]
        return slice(int(ptr[b]), int(ptr[b + 1]))

    def lower_block(self, K: int, b: int) -> np.ndarray:
        """View of block ``b`` of column ``K`` (rows in block order)."""
        return self.lower[K][self._span(K, b)]

    def upper_block(self, K: int, b: int) -> np.ndarray:
        return self.upper[K][:, self._span(K, b)]

    def copy(self) -> "BlockFactor":
        return copy.deepcopy(self)

    def dense_factors(self):
        """Dense ``(L, U)`` for small problems (tests and diagnostics)."""
        n = self.bp.n
        part = self.bp.partition
        L = np.zeros((n, n), dtype=self.dtype)
        U = np.zeros((n, n), dtype=self.dtype)
        for K in range(self.bp.count):
            f, e = part.first(K), part.last(K) + 1
            L[f:e, f:e] = kernels.unit_lower(self.diag[K])
            U[f:e, f:e] = kernels.upper(self.diag[K])
            rows = self.bp.rows[K]
            L[rows, f:e] = self.lower[K]
            U[f:e, rows] = self.upper[K]
        return L, U


def factorize(A: CSCMatrix, bp: BlockPattern, pivot_tol: float = 1e-14) -> BlockFactor:
    """Numeric factorization ``A = L U`` on the block structure ``bp``.

    ``A`` must already be permuted to match ``bp``.  Supernodes are
    processed in ascending order; each one first gathers the Schur updates
    of all descendants that have a block in its row, then factors its
    diagonal block without pivoting and solves for its off-diagonal blocks.
    A pivot smaller than ``pivot_tol * max|A|`` raises :class:`PivotBreakdown`.
    """
    part = bp.partition
    n, N = bp.n, bp.count
    if A.n != n:
        raise ValueError(f"matrix is {A.n}x{A.n} but the structure is for n={n}")
    full = A.to_scipy_full()
    dtype = np.result_type(A.values.dtype, float)
    amax = float(np.abs(A.values).max()) if A.nnz else 0.0
    tol = pivot_tol * amax

    diag, lower, upper = [None] * N, [None] * N, [None] * N
    updaters: List[list] = [[] for _ in range(N)]
    loc = np.full(n, -1, dtype=np.int64)
    flops = 0.0
    update_flops = 0.0
    pivots = []

    for K in range(N):
        f, e = part.first(K), part.last(K)
        s = e - f + 1
        rK = bp.rows[K]
        prow = np.concatenate([np.arange(f, e + 1), rK])
        loc[prow] = np.arange(len(prow))
        F = np.zeros((len(prow), s), dtype=dtype)

        for j in range(f, e + 1):
            lo, hi = full.indptr[j], full.indptr[j + 1]
            ri = full.indices[lo:hi]
            keep = ri >= f
            ri = ri[keep]
            li = loc[ri]
            if (li < 0).any():
                bad = int(ri[li < 0][0])
                raise ValueError(f"entry ({bad}, {j}) lies outside the symbolic structure")
            F[li, j - f] = full.data[lo:hi][keep]

        for D, b in updaters[K]:
            ptr = bp.block_ptr[D]
            a0, a1 = int(ptr[b]), int(ptr[b + 1])
            rowsD = bp.rows[D][a0:]
            upd = kernels.gemm(lower[D][a0:], upper[D][:, a0:a1])
            tgt = bp.rows[D][a0:a1] - f
            F[np.ix_(loc[rowsD], tgt)] -= upd
            update_flops += 2.0 * upd.shape[0] * upd.shape[1] * lower[D].shape[1]

        dK = np.array(F[:s, :s], copy=True)
        try:
            kernels.lu_nopivot(dK, tol)
        except PivotBreakdown as exc:
            exc.supernode = K
            exc.args = (f"supernode {K + 1}, local column {exc.local_index + 1}: {exc.args[0]}",)
            loc[prow] = -1
            raise
        flops += 2.0 * s ** 3 / 3.0
        below = F[s:]
        diag[K] = dK
        lower[K] = kernels.solve_right_upper(dK, below)
        upper[K] = kernels.solve_left_unit_lower(dK, np.ascontiguousarray(below.T))
        flops += 2.0 * len(rK) * s * s
        pivots.append(np.abs(np.diagonal(dK)))
        loc[prow] = -1
        for b, I in enumerate(bp.block_sups[K]):
            updaters[int(I)].append((K, b))

    piv = np.concatenate(pivots) if pivots else np.zeros(1)
    stats = FactorStats(
        nnz_a=A.full_nnz(), nnz_l=bp.nnz_l(), supernodes=N, flops=flops + update_flops,
        update_flops=update_flops,
        min_pivot=float(piv.min()), max_pivot=float(piv.max()),
    )
    return BlockFactor(bp, diag, lower, upper, normalized=False, stats=stats)


def normalize(F: BlockFactor) -> BlockFactor:
    """Overwrite ``L[I, K]`` by ``L[I, K] inv(L_KK)`` and mirror it into ``U[K, I]``.

    Works in place and returns ``F``.  A second call raises
    :class:`FactorStateError` without touching the data.
    """
    if F.normalized:
        raise FactorStateError("factor is already normalized")
    for K in range(F.bp.count):
        for b in range(len(F.bp.block_sups[K])):
            span = F._span(K, b)
            lhat = kernels.normalize_block(F.diag[K], F.lower[K][span])
            F.lower[K][span] = lhat
            F.upper[K][:, span] = kernels.transpose_copy(lhat)
    F.normalized = True
    return F


def factor_report(F: BlockFactor) -> str:
    """Plain-text dump: one line per block with its shape and a value checksum."""
    lines = []
    for K in range(F.bp.count):
        d = F.diag[K]
        lines.append(f"{K + 1} diag {d.shape[0]}x{d.shape[1]} sum={complex(d.sum()):.12g}")
        for b, I in enumerate(F.bp.block_sups[K]):
            blk = F.lower_block(K, b)
            lines.append(f"{K + 1} L[{int(I) + 1}] {blk.shape[0]}x{blk.shape[1]} "
                         f"sum={complex(blk.sum()):.12g}")
    return "\n".join(lines) + "\n"
