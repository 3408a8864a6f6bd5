"""Shared test matrices and small utilities."""

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from selinv.sparse import CSCMatrix, build_shifted, coord_to_csc, read_matrix_market
from selinv.verify import laplacian2d, random_spd, random_symmetric

DATA = Path(__file__).parent / "data"
FIG1 = DATA / "fig1.mtx"

IMAG_SHIFTS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


def fig1_matrix() -> CSCMatrix:
    return coord_to_csc(read_matrix_market(FIG1))


def corpus():
    """``(name, matrix, kind)`` with kind ``"spd"`` or ``"complex"``.

    100 random SPD matrices, the 2D Laplacians on 2x2 .. 16x16 grids and
    90 complex-shifted indefinite matrices; sizes and shifts are drawn from
    a fixed seed so the list is identical on every call.
    """
    rng = np.random.default_rng(2024)
    out = []
    for s in range(100):
        n = int(rng.integers(4, 65))
        d = float(rng.uniform(0.03, 0.3))
        out.append((f"spd-n{n}-s{s}", random_spd(n, d, seed=s), "spd"))
    for k in range(2, 17):
        out.append((f"lap2d-{k}", laplacian2d(k), "spd"))
    for s in range(90):
        n = int(rng.integers(4, 65))
        d = float(rng.uniform(0.03, 0.3))
        H = random_symmetric(n, d, seed=1000 + s)
        eig = np.linalg.eigvalsh(H.to_dense())
        re = float(rng.uniform(eig.min(), eig.max()))
        im = IMAG_SHIFTS[s % len(IMAG_SHIFTS)]
        out.append((f"shift-n{n}-s{s}-im{im:g}", build_shifted(H, None, complex(re, im)), "complex"))
    return out


def small_corpus():
    """A quick cross-section of :func:`corpus` for unit-level tests."""
    return [
        ("lap2d-6", laplacian2d(6), "spd"),
        ("spd-30", random_spd(30, 0.1, seed=3), "spd"),
        ("fig1", fig1_matrix(), "spd"),
        ("shift-40", build_shifted(random_symmetric(40, 0.1, seed=1), None, 0.2 + 1e-3j), "complex"),
    ]


def arrow(n: int, hub: int = 0, seed: int = 0) -> CSCMatrix:
    """Arrow (star graph) matrix with the hub at column ``hub``."""
    rng = np.random.default_rng(seed)
    A = np.diag(rng.uniform(1, 2, n) + n)
    A[hub, :] = A[:, hub] = rng.uniform(-1, 1, n)
    A[hub, hub] = 2.0 * n
    return CSCMatrix.from_dense(A)


def dense_fill(mask: np.ndarray) -> int:
    """Strict-lower nonzeros of the Cholesky factor of a symmetric boolean pattern."""
    m = mask.copy().astype(bool)
    n = m.shape[0]
    for k in range(n):
        nb = np.flatnonzero(m[k + 1:, k]) + k + 1
        m[np.ix_(nb, nb)] = True
    return int(np.tril(m, -1).sum())


# criterion number -> one-line verdict, filled in by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number: int, title: str, passed, detail: str) -> None:
    verdict = "INFO" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number} [{verdict}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
