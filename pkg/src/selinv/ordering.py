"""Symmetric fill-reducing orderings."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import CSCMatrix, SparsityPattern


class PermutationError(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    """``perm[new] = old`` and ``inverse[old] = new`` (both 0-based)."""

    perm: np.ndarray
    inverse: np.ndarray

    @property
    def n(self) -> int:
        return len(self.perm)

    @classmethod
    def from_perm(cls, perm) -> "Permutation":
        perm = np.asarray(perm, dtype=np.int64)
        n = len(perm)
        if n and (perm.min() < 0 or perm.max() >= n):
            raise PermutationError(f"permutation entries must lie in 0..{n - 1}")
        counts = np.bincount(perm, minlength=n)
        if (counts != 1).any():
            dup = np.flatnonzero(counts > 1)
            gap = np.flatnonzero(counts == 0)
            raise PermutationError(
                f"not a bijection: duplicates {(dup + 1).tolist()}, missing {(gap + 1).tolist()}"
            )
        inverse = np.empty(n, dtype=np.int64)
        inverse[perm] = np.arange(n)
        return cls(perm, inverse)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls.from_perm(np.arange(n))

    def compose(self, then: "Permutation") -> "Permutation":
        """Apply ``self`` first, then ``then`` (both as new->old maps)."""
        return Permutation.from_perm(self.perm[then.perm])


def order_natural(pattern: SparsityPattern) -> Permutation:
    return Permutation.identity(pattern.n)


def order_minimum_degree(pattern: SparsityPattern) -> Permutation:
    """Classic minimum degree on the elimination graph.

    Ties on the current degree go to the smaller initial degree, then to
    the smaller original index, so the result is fully deterministic.
    """
    n = pattern.n
    adj = []
    for j in range(n):
        col = pattern.column(j)
        s = set(col.tolist())
        s.discard(j)
        adj.append(s)
    initial = [len(a) for a in adj]
    degree = initial[:]
    heap = [(degree[v], initial[v], v) for v in range(n)]
    heapq.heapify(heap)
    eliminated = np.zeros(n, dtype=bool)
    order = []
    while heap:
        d, _, v = heapq.heappop(heap)
        if eliminated[v] or d != degree[v]:
            continue
        eliminated[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au |= nbrs
            au.discard(u)
            if len(au) != degree[u]:
                degree[u] = len(au)
                heapq.heappush(heap, (degree[u], initial[u], u))
        adj[v] = set()
    return Permutation.from_perm(order)


def load_permutation(path, n=None) -> Permutation:
    """Read whitespace-separated 1-based indices (new -> old)."""
    text = Path(path).read_text().split()
    try:
        values = [int(t) for t in text]
    except ValueError as exc:
        raise PermutationError(f"{path}: non-integer token ({exc})") from None
    if n is not None and len(values) != n:
        raise PermutationError(f"{path}: expected {n} entries, found {len(values)}")
    return Permutation.from_perm(np.asarray(values, dtype=np.int64) - 1)


def save_permutation(path, p: Permutation) -> None:
    Path(path).write_text(" ".join(str(int(i) + 1) for i in p.perm) + "\n")


def apply_symmetric_permutation(A: CSCMatrix, p: Permutation) -> CSCMatrix:
    """Return ``B`` with ``B[i, j] = A[p(i), p(j)]``."""
    if p.n != A.n:
        raise PermutationError(f"dimension mismatch: matrix is {A.n}, permutation is {p.n}")
    if A.symmetric:
        lower = A.to_scipy().tocoo()
        r = p.inverse[lower.row]
        c = p.inverse[lower.col]
        lo, hi = np.maximum(r, c), np.minimum(r, c)
        B = sp.coo_matrix((lower.data, (lo, hi)), shape=lower.shape).tocsc()
    else:
        full = A.to_scipy().tocoo()
        B = sp.coo_matrix(
            (full.data, (p.inverse[full.row], p.inverse[full.col])), shape=full.shape
        ).tocsc()
    B.sort_indices()
    return CSCMatrix(A.n, B.indptr.astype(np.int64), B.indices.astype(np.int64),
                     B.data.copy(), A.symmetric)


def permute_pattern(pattern: SparsityPattern, p: Permutation) -> SparsityPattern:
    m = pattern.to_scipy().tocoo()
    B = sp.coo_matrix(
        (m.data, (p.inverse[m.row], p.inverse[m.col])), shape=m.shape
    )
    return SparsityPattern.from_scipy(B)
