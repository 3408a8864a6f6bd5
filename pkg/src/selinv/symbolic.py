"""Elimination trees, supernodes and the block structure of the factor.

All index arrays are 0-based; ``-1`` marks a root in parent arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .sparse import SparsityPattern

DEFAULT_RELAX_MAX_COLS = 40
DEFAULT_RELAX_FILL_RATIO = 0.3


@dataclass
class EliminationTree:
    parent: np.ndarray
    children: List[List[int]] = field(default_factory=list)
    depth: Optional[np.ndarray] = None

    @classmethod
    def from_parent(cls, parent) -> "EliminationTree":
        parent = np.asarray(parent, dtype=np.int64)
        n = len(parent)
        children = [[] for _ in range(n)]
        for v in range(n):
            if parent[v] >= 0:
                children[parent[v]].append(v)
        depth = np.zeros(n, dtype=np.int64)
        # parents follow their children, so a reverse sweep is topological
        for v in range(n - 1, -1, -1):
            if parent[v] >= 0:
                depth[v] = depth[parent[v]] + 1
        return cls(parent, children, depth)

    @property
    def n(self) -> int:
        return len(self.parent)

    def roots(self) -> List[int]:
        return [v for v in range(self.n) if self.parent[v] < 0]

    def ancestors(self, v: int) -> List[int]:
        out = []
        p = self.parent[v]
        while p >= 0:
            out.append(int(p))
            p = self.parent[p]
        return out


def column_etree(pattern: SparsityPattern) -> np.ndarray:
    """Elimination tree of a structurally symmetric pattern (Liu's algorithm)."""
    n = pattern.n
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    colptr, rowind = pattern.colptr, pattern.rowind
    for k in range(n):
        for i in rowind[colptr[k]:colptr[k + 1]]:
            # walk from each i < k in column k up to its current root
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def postorder(parent) -> np.ndarray:
    """Depth-first postorder; children are visited in ascending index order.

    Returns ``order`` with ``order[new] = old``.
    """
    parent = np.asarray(parent)
    n = len(parent)
    children = [[] for _ in range(n)]
    for v in range(n):
        if parent[v] >= 0:
            children[parent[v]].append(v)
    order = []
    for root in range(n):
        if parent[root] >= 0:
            continue
        stack = [(root, 0)]
        while stack:
            v, k = stack.pop()
            if k < len(children[v]):
                stack.append((v, k + 1))
                stack.append((children[v][k], 0))
            else:
                order.append(v)
    return np.asarray(order, dtype=np.int64)


def column_structure(pattern: SparsityPattern, parent) -> List[np.ndarray]:
    """Below-diagonal row structure of every column of ``L`` (fill included)."""
    n = pattern.n
    child_rows: List[list] = [[] for _ in range(n)]
    struct = []
    for j in range(n):
        col = pattern.column(j)
        pieces = [col[col > j]]
        for c in child_rows[j]:
            pieces.append(c[c > j])
        rows = np.unique(np.concatenate(pieces)) if pieces else np.zeros(0, np.int64)
        struct.append(rows.astype(np.int64))
        p = parent[j]
        if p >= 0:
            child_rows[p].append(rows)
        child_rows[j] = []
    return struct


@dataclass
class SupernodePartition:
    """Contiguous column ranges ``boundaries[K]:boundaries[K+1]``."""

    boundaries: np.ndarray
    col_to_sup: np.ndarray

    @classmethod
    def from_boundaries(cls, boundaries) -> "SupernodePartition":
        b = np.asarray(boundaries, dtype=np.int64)
        if len(b) < 2 or b[0] != 0 or (np.diff(b) <= 0).any():
            raise ValueError("boundaries must start at 0 and increase strictly")
        sizes = np.diff(b)
        col_to_sup = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
        return cls(b, col_to_sup)

    @classmethod
    def from_sizes(cls, sizes) -> "SupernodePartition":
        return cls.from_boundaries(np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def count(self) -> int:
        return len(self.boundaries) - 1

    @property
    def n(self) -> int:
        return int(self.boundaries[-1])

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def first(self, K: int) -> int:
        return int(self.boundaries[K])

    def last(self, K: int) -> int:
        return int(self.boundaries[K + 1]) - 1

    def size(self, K: int) -> int:
        return int(self.boundaries[K + 1] - self.boundaries[K])

    def cols(self, K: int) -> range:
        return range(self.boundaries[K], self.boundaries[K + 1])


def detect_supernodes(
    struct: List[np.ndarray],
    relax_max_cols: int = DEFAULT_RELAX_MAX_COLS,
    relax_fill_ratio: float = DEFAULT_RELAX_FILL_RATIO,
) -> SupernodePartition:
    """Greedy left-to-right grouping of adjacent columns.

    A column joins the current supernode when the merged supernode (dense
    diagonal block, union of the rows below it) would store at most
    ``relax_fill_ratio`` explicit zeros per stored entry and would not exceed
    ``relax_max_cols`` columns.  ``relax_fill_ratio=0`` gives the strict
    definition: only structurally identical columns are merged.
    """
    if relax_max_cols < 1:
        raise ValueError("relax_max_cols must be >= 1")
    n = len(struct)
    if n == 0:
        return SupernodePartition.from_boundaries([0])
    boundaries = [0]
    start = 0
    union = set(struct[0].tolist())
    actual = 1 + len(struct[0])
    for c in range(1, n):
        t = c - start + 1
        merged = False
        if t <= relax_max_cols:
            cand = union | set(struct[c].tolist())
            below = sum(1 for r in cand if r > c)
            stored = t * (t + 1) // 2 + t * below
            cand_actual = actual + 1 + len(struct[c])
            extra = stored - cand_actual
            if extra <= relax_fill_ratio * stored + 1e-12:
                union = cand
                actual = cand_actual
                merged = True
        if not merged:
            boundaries.append(c)
            start = c
            union = set(struct[c].tolist())
            actual = 1 + len(struct[c])
    boundaries.append(n)
    return SupernodePartition.from_boundaries(boundaries)


@dataclass
class BlockPattern:
    """Nonzero block rows of every supernodal column of ``L``.

    ``rows[K]`` lists the global row indices below the diagonal block of
    supernode ``K`` (sorted).  They are grouped into blocks: block ``b`` of
    ``K`` belongs to supernode ``block_sups[K][b]`` and occupies
    ``rows[K][block_ptr[K][b]:block_ptr[K][b + 1]]``.  By symmetry the same
    structure, transposed, describes ``U``.
    """

    partition: SupernodePartition
    rows: List[np.ndarray]
    block_sups: List[np.ndarray]
    block_ptr: List[np.ndarray]
    parent: np.ndarray

    @property
    def count(self) -> int:
        return self.partition.count

    @property
    def n(self) -> int:
        return self.partition.n

    def blocks(self, K: int) -> Iterator[tuple]:
        """Yield ``(I, row_indices)`` for each off-diagonal block of column ``K``."""
        ptr = self.block_ptr[K]
        for b, I in enumerate(self.block_sups[K]):
            yield int(I), self.rows[K][ptr[b]:ptr[b + 1]]

    def block_rows(self, K: int, I: int) -> np.ndarray:
        b = self.block_index(K, I)
        return self.rows[K][self.block_ptr[K][b]:self.block_ptr[K][b + 1]]

    def block_index(self, K: int, I: int) -> int:
        sups = self.block_sups[K]
        b = int(np.searchsorted(sups, I))
        if b >= len(sups) or sups[b] != I:
            raise KeyError(f"no block ({I}, {K})")
        return b

    def has_block(self, I: int, K: int) -> bool:
        sups = self.block_sups[K]
        b = int(np.searchsorted(sups, I))
        return b < len(sups) and sups[b] == I

    def index_set(self, K: int) -> List[int]:
        """Supernodes ``I > K`` with a nonzero block ``L[I, K]``."""
        return [int(I) for I in self.block_sups[K]]

    def etree(self) -> EliminationTree:
        return EliminationTree.from_parent(self.parent)

    def nnz_l(self) -> int:
        """Stored entries of ``L`` including the dense lower diagonal blocks."""
        total = 0
        for K in range(self.count):
            s = self.partition.size(K)
            total += s * (s + 1) // 2 + s * len(self.rows[K])
        return total

    def scalar_pattern(self) -> np.ndarray:
        """Dense boolean lower-triangular pattern of ``L`` (for tests)."""
        out = np.zeros((self.n, self.n), dtype=bool)
        for K in range(self.count):
            cols = np.arange(self.partition.first(K), self.partition.last(K) + 1)
            for a, j in enumerate(cols):
                out[cols[a:], j] = True
                out[self.rows[K], j] = True
        return out

    def report(self) -> str:
        """One line per supernode: range, parent and block rows (1-based)."""
        lines = []
        for K in range(self.count):
            p = int(self.parent[K])
            blocks = ",".join(str(int(I) + 1) for I in self.block_sups[K]) or "-"
            lines.append(
                f"{K + 1} cols={self.partition.first(K) + 1}-{self.partition.last(K) + 1} "
                f"parent={p + 1 if p >= 0 else 0} blocks={blocks}"
            )
        return "\n".join(lines) + "\n"


def symbolic_factor(pattern: SparsityPattern, partition: SupernodePartition) -> BlockPattern:
    """Supernodal symbolic factorization.

    The rows below supernode ``K`` are the rows of ``A`` in its columns plus
    the rows inherited from children in the supernodal elimination tree.
    The result is closed under the Schur-complement updates even when the
    partition merges structurally different columns.
    """
    N = partition.count
    col_to_sup = partition.col_to_sup
    inherited: List[list] = [[] for _ in range(N)]
    rows, block_sups, block_ptr = [], [], []
    parent = np.full(N, -1, dtype=np.int64)
    colptr, rowind = pattern.colptr, pattern.rowind
    for K in range(N):
        f, e = partition.first(K), partition.last(K)
        pieces = [rowind[colptr[f]:colptr[e + 1]]]
        pieces.extend(inherited[K])
        r = np.unique(np.concatenate(pieces))
        r = r[r > e].astype(np.int64)
        sups = col_to_sup[r]
        if len(r):
            change = np.flatnonzero(np.diff(sups)) + 1
            ptr = np.concatenate([[0], change, [len(r)]]).astype(np.int64)
            bsup = sups[ptr[:-1]]
            parent[K] = bsup[0]
            inherited[bsup[0]].append(r)
        else:
            ptr = np.zeros(1, dtype=np.int64)
            bsup = np.zeros(0, dtype=np.int64)
        inherited[K] = []
        rows.append(r)
        block_sups.append(bsup.astype(np.int64))
        block_ptr.append(ptr)
    return BlockPattern(partition, rows, block_sups, block_ptr, parent)


def supernodal_etree(bp: BlockPattern) -> EliminationTree:
    """``parent(K) = min{I > K : L[I, K] nonzero}``."""
    return bp.etree()
