"""Dense block kernels shared by the sequential and parallel code paths.

Every floating point operation on blocks goes through these functions, so
two code paths that feed them identical operands in the same order produce
bitwise identical results.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular


class PivotBreakdown(ArithmeticError):
    """A pivot fell below the tolerance during factorization.

    ``supernode`` and ``local_index`` are 0-based; ``pole`` is set when the
    failure happened inside a pole expansion.
    """

    def __init__(self, message, supernode=None, local_index=None, pivot=None):
        super().__init__(message)
        self.supernode = supernode
        self.local_index = local_index
        self.pivot = pivot
        self.pole = None


def lu_nopivot(a: np.ndarray, tol: float) -> np.ndarray:
    """In-place ``a = L U`` without pivoting; ``L`` has an implicit unit diagonal."""
    s = a.shape[0]
    for k in range(s):
        piv = a[k, k]
        if not abs(piv) >= tol:
            raise PivotBreakdown(f"pivot {piv!r} below tolerance {tol:g}", local_index=k, pivot=piv)
        if k + 1 < s:
            a[k + 1:, k] /= piv
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a


def unit_lower(packed: np.ndarray) -> np.ndarray:
    out = np.tril(packed, -1)
    np.fill_diagonal(out, 1)
    return out


def upper(packed: np.ndarray) -> np.ndarray:
    return np.triu(packed)


def solve_right_upper(packed: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``b @ inv(U)`` for the upper factor stored in ``packed``."""
    x = solve_triangular(packed, b.T, lower=False, trans="T", check_finite=False)
    return np.ascontiguousarray(x.T)


def solve_left_unit_lower(packed: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``inv(L) @ b`` for the unit lower factor stored in ``packed``."""
    x = solve_triangular(packed, b, lower=True, unit_diagonal=True, check_finite=False)
    return np.ascontiguousarray(x)


def normalize_block(packed: np.ndarray, lblock: np.ndarray) -> np.ndarray:
    """``lblock @ inv(L_KK)`` where ``L_KK`` is the unit lower part of ``packed``."""
    if lblock.size == 0:
        return np.ascontiguousarray(lblock)
    x = solve_triangular(packed, lblock.T, lower=True, trans="T",
                         unit_diagonal=True, check_finite=False)
    return np.ascontiguousarray(x.T)


def diag_inverse(packed: np.ndarray) -> np.ndarray:
    """``inv(U_KK) @ inv(L_KK)`` from the packed diagonal factor."""
    s = packed.shape[0]
    eye = np.eye(s, dtype=packed.dtype)
    linv = solve_triangular(packed, eye, lower=True, unit_diagonal=True, check_finite=False)
    return np.ascontiguousarray(
        solve_triangular(packed, linv, lower=False, check_finite=False)
    )


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a) @ np.ascontiguousarray(b)


def take(block: np.ndarray, rows, cols) -> np.ndarray:
    """Contiguous copy of ``block[rows][:, cols]``."""
    return np.ascontiguousarray(block[np.ix_(rows, cols)])


def reduce_terms(terms: Sequence[np.ndarray]) -> np.ndarray:
    """Left-to-right sum of equally shaped blocks."""
    acc = np.array(terms[0], copy=True)
    for t in terms[1:]:
        acc += t
    return acc


def symmetrize(x: np.ndarray) -> np.ndarray:
    """``(x + x.T) / 2``; the result is bitwise symmetric."""
    return 0.5 * (x + x.T)


def transpose_copy(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.T)
