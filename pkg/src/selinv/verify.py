"""Independent dense oracles, error metrics and test-matrix generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .sparse import CSCMatrix

ORACLE_MAX_N = 256


class SingularMatrixError(ArithmeticError):
    pass


def dense_lu_partial_pivot(a: np.ndarray):
    """Row-pivoted dense LU; returns ``(lu, piv)`` with ``a[piv] = L U``."""
    lu = np.array(a, dtype=np.result_type(a, float), copy=True)
    n = lu.shape[0]
    piv = np.arange(n)
    scale = np.abs(lu).max() if lu.size else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= n * np.finfo(float).eps * scale:
            raise SingularMatrixError(f"matrix is singular to working precision at column {k}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv


def dense_inverse(a) -> np.ndarray:
    """Full inverse by solving ``L y_j = P e_j``, ``U x_j = y_j`` for every column."""
    a = np.asarray(a)
    n = a.shape[0]
    if n > ORACLE_MAX_N:
        raise ValueError(f"dense oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    lu, piv = dense_lu_partial_pivot(a)
    rhs = np.eye(n, dtype=lu.dtype)[piv]
    # forward substitution with the unit lower factor, all columns at once
    y = rhs.copy()
    for i in range(n):
        y[i] -= lu[i, :i] @ y[:i]
    x = y
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def dense_selected_oracle(A: Union[CSCMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(A, CSCMatrix):
        A = A.to_dense()
    return dense_inverse(A)


@dataclass
class ComparisonReport:
    max_columnwise: float
    max_entrywise: float
    count: int

    def passed(self, tol: float) -> bool:
        return self.max_columnwise <= tol and self.max_entrywise <= tol

    def __str__(self):
        return (f"compared {self.count} entries: max column-wise relative error "
                f"{self.max_columnwise:.3e}, max entrywise relative error {self.max_entrywise:.3e}")


class SkeletonMismatch(ValueError):
    pass


def compare_selected(S1, S2) -> ComparisonReport:
    """Compare two selected inverses, or one against a dense reference.

    Column-wise error: ``max_j ||d_j|| / ||ref_j||`` over the computed
    positions of column ``j``.  Entrywise error: ``max |d_ij| / |ref_ij|``,
    where entries smaller than ``1e-8`` times the largest entry of their
    column are measured against that threshold instead (pure zeros have no
    meaningful relative error).  ``S2`` is the reference.
    """
    i, j = S1.positions()
    v1 = S1.extract(i, j)
    if isinstance(S2, np.ndarray):
        v2 = S2[i, j]
    else:
        i2, j2 = S2.positions()
        if set(zip(i.tolist(), j.tolist())) != set(zip(i2.tolist(), j2.tolist())):
            raise SkeletonMismatch("selected inverses have different computed positions")
        v2 = S2.extract(i, j)
    if len(v1) == 0:
        raise SkeletonMismatch("nothing to compare")
    # symmetric: a stored lower entry (i, j) also stands for (j, i)
    rows = np.concatenate([i, j[i != j]])
    cols = np.concatenate([j, i[i != j]])
    d = np.abs(np.concatenate([v1 - v2, (v1 - v2)[i != j]]))
    ref = np.abs(np.concatenate([v2, v2[i != j]]))
    n = S1.n
    dcol = np.sqrt(np.bincount(cols, weights=d ** 2, minlength=n))
    rcol = np.sqrt(np.bincount(cols, weights=ref ** 2, minlength=n))
    rmax = np.zeros(n)
    np.maximum.at(rmax, cols, ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        colerr = np.where(rcol > 0, dcol / rcol, np.where(dcol > 0, np.inf, 0.0))
        floor = np.maximum(ref, 1e-8 * rmax[cols])
        enterr = np.where(floor > 0, d / floor, np.where(d > 0, np.inf, 0.0))
    return ComparisonReport(float(colerr.max()), float(enterr.max()), int(len(v1)))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def laplacian2d(k: int) -> CSCMatrix:
    """5-point Laplacian on a ``k x k`` grid (``n = k*k``)."""
    t = sp.diags([-np.ones(k - 1), 2 * np.ones(k), -np.ones(k - 1)], [-1, 0, 1])
    eye = sp.identity(k)
    A = sp.kron(eye, t) + sp.kron(t, eye)
    return CSCMatrix.from_scipy(A.tocsc(), symmetric=True)


def random_spd(n: int, density: float = 0.1, seed: int = 0, delta: float = 1e-2) -> CSCMatrix:
    """``B.T B + delta I`` with a random sparse ``B``."""
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=rng, format="csc")
    B = B + sp.identity(n, format="csc")
    A = (B.T @ B + delta * sp.identity(n)).tocsc()
    return CSCMatrix.from_scipy(A, symmetric=True)


def random_symmetric(n: int, density: float = 0.1, seed: int = 0) -> CSCMatrix:
    """Real symmetric, generally indefinite, with a full diagonal."""
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=rng, format="csc",
                  data_rvs=lambda m: rng.standard_normal(m))
    A = B + B.T + sp.diags(rng.standard_normal(n))
    return CSCMatrix.from_scipy(A.tocsc(), symmetric=True)


def shifted_indefinite(n: int, density: float = 0.1, z=1e-3j, seed: int = 0) -> CSCMatrix:
    """``H - z I`` with ``H`` from :func:`random_symmetric`."""
    from .sparse import build_shifted

    return build_shifted(random_symmetric(n, density, seed), None, z)


def tridiagonal(n: int, seed: int = 0) -> CSCMatrix:
    """Random diagonally dominant symmetric tridiagonal matrix (a chain tree)."""
    rng = np.random.default_rng(seed)
    off = rng.uniform(-1, 1, n - 1)
    d = rng.uniform(1, 2, n) + np.abs(np.concatenate([[0], off])) + np.abs(np.concatenate([off, [0]]))
    A = sp.diags([off, d, off], [-1, 0, 1])
    return CSCMatrix.from_scipy(A.tocsc(), symmetric=True)


def _dissection_order(lo: int, hi: int, out: list) -> None:
    if lo >= hi:
        return
    mid = (lo + hi) // 2
    _dissection_order(lo, mid, out)
    _dissection_order(mid + 1, hi, out)
    out.append(mid)


def balanced_tree(depth: int, seed: int = 0) -> CSCMatrix:
    """Path graph of ``2**depth - 1`` nodes in nested-dissection order.

    In natural order its elimination tree is a complete binary tree of the
    given depth, so sibling subtrees share no rows or columns.
    """
    n = 2 ** depth - 1
    order: list = []
    _dissection_order(0, n, order)
    A = tridiagonal(n, seed).to_scipy_full()
    A = A[order][:, order]
    return CSCMatrix.from_scipy(sp.tril(A).tocsc(), symmetric=True)
