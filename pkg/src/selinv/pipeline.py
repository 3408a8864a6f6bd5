"""End-to-end driver: ordering, symbolic analysis, factorization, inversion."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .factor import BlockFactor, factorize, normalize
from .inverse import SelectedInverse, accuracy_metric, selected_inversion
from .kernels import PivotBreakdown
from .ordering import (
    Permutation, apply_symmetric_permutation, order_minimum_degree, permute_pattern,
)
from .sparse import CSCMatrix, SparsityPattern, build_shifted, pattern_of
from .symbolic import (
    DEFAULT_RELAX_FILL_RATIO, DEFAULT_RELAX_MAX_COLS, BlockPattern, EliminationTree,
    SupernodePartition, column_etree, column_structure, detect_supernodes, postorder,
    symbolic_factor,
)


@dataclass
class Analysis:
    """Everything that depends only on the sparsity pattern."""

    perm: Permutation
    pattern: SparsityPattern          # permuted, both triangles, diagonal included
    column_parent: np.ndarray
    partition: SupernodePartition
    bp: BlockPattern
    etree: EliminationTree
    seconds: float = 0.0
    ordering: str = "explicit"


def analyze(
    A: Union[CSCMatrix, SparsityPattern],
    ordering: Union[str, Permutation] = "mindeg",
    relax_max_cols: int = DEFAULT_RELAX_MAX_COLS,
    relax_fill_ratio: float = DEFAULT_RELAX_FILL_RATIO,
    partition: Optional[SupernodePartition] = None,
    apply_postorder: bool = True,
) -> Analysis:
    """Order, postorder and symbolically factor the pattern of ``A``.

    ``ordering`` is ``"mindeg"``, ``"natural"`` or an explicit
    :class:`Permutation`.  An explicit ``partition`` skips supernode
    detection and must refer to the final (permuted, postordered) columns.
    """
    t0 = time.perf_counter()
    pattern = A if isinstance(A, SparsityPattern) else pattern_of(A)
    if isinstance(ordering, Permutation):
        p = ordering
    elif ordering == "mindeg":
        p = order_minimum_degree(pattern)
    elif ordering == "natural":
        p = Permutation.identity(pattern.n)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    if p.n != pattern.n:
        raise ValueError(f"ordering has length {p.n}, matrix has n={pattern.n}")

    permuted = permute_pattern(pattern, p)
    parent = column_etree(permuted)
    if apply_postorder:
        q = Permutation.from_perm(postorder(parent))
        if not np.array_equal(q.perm, np.arange(pattern.n)):
            p = p.compose(q)
            permuted = permute_pattern(pattern, p)
            parent = column_etree(permuted)

    if partition is None:
        struct = column_structure(permuted, parent)
        partition = detect_supernodes(struct, relax_max_cols, relax_fill_ratio)
    elif partition.n != pattern.n:
        raise ValueError("partition does not cover the matrix")
    bp = symbolic_factor(permuted, partition)
    return Analysis(p, permuted, parent, partition, bp, bp.etree(),
                    seconds=time.perf_counter() - t0,
                    ordering=ordering if isinstance(ordering, str) else "explicit")


def factor_matrix(A: CSCMatrix, analysis: Analysis, pivot_tol: float = 1e-14) -> BlockFactor:
    """Permute ``A`` as the analysis prescribes and factor it."""
    B = apply_symmetric_permutation(A, analysis.perm)
    return factorize(B, analysis.bp, pivot_tol=pivot_tol)


@dataclass
class RunResult:
    inverse: SelectedInverse
    analysis: Analysis
    factor: BlockFactor
    timings: dict = field(default_factory=dict)
    parallel_run: object = None


def run(
    A: CSCMatrix,
    analysis: Optional[Analysis] = None,
    grid: Optional[Tuple[int, int]] = None,
    deterministic: bool = True,
    pivot_tol: float = 1e-14,
    factor_hook=None,
    **analyze_kwargs,
) -> RunResult:
    """Full pipeline.  ``grid=None`` uses the sequential code path.

    ``factor_hook(F)``, if given, may inspect or alter the factor before
    inversion (used by negative-control tests).
    """
    timings = {}
    if analysis is None:
        analysis = analyze(A, **analyze_kwargs)
    timings["symbolic"] = analysis.seconds
    t0 = time.perf_counter()
    F = factor_matrix(A, analysis, pivot_tol=pivot_tol)
    timings["factor"] = time.perf_counter() - t0
    if factor_hook is not None:
        factor_hook(F)
    t0 = time.perf_counter()
    prun = None
    if grid is None:
        S = selected_inversion(normalize(F.copy()), perm=analysis.perm)
    else:
        from .parallel import ProcessorGrid, parallel_selected_inversion

        prun = parallel_selected_inversion(
            F, ProcessorGrid(*grid), perm=analysis.perm,
            mode="deterministic" if deterministic else "fast",
        )
        S = prun.inverse
    timings["selinv"] = time.perf_counter() - t0
    S.meta.update(
        grid=list(grid) if grid else [1, 1],
        timings=dict(timings),
        ordering=analysis.ordering,
    )
    return RunResult(S, analysis, F, timings, prun)


def selected_inverse(A: CSCMatrix, **kwargs) -> SelectedInverse:
    """Convenience wrapper returning only the selected inverse."""
    return run(A, **kwargs).inverse


@dataclass
class PoleSet:
    """Poles ``z_l`` and weights ``w_l`` of ``sum_l w_l inv(H - z_l S)``."""

    poles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=complex))
        if len(self.poles) < 1:
            raise ValueError("a pole set needs at least one pole")
        if len(self.poles) != len(self.weights):
            raise ValueError("poles and weights differ in length")

    def __len__(self):
        return len(self.poles)


def pole_density_matrix(
    H: CSCMatrix,
    S: Optional[CSCMatrix],
    poles: PoleSet,
    grid: Optional[Tuple[int, int]] = None,
    pivot_tol: float = 1e-14,
    **analyze_kwargs,
) -> SelectedInverse:
    """Accumulate ``sum_l w_l inv(H - z_l S)`` on the selected pattern of ``H``.

    The symbolic analysis is shared by every pole; a breakdown reports the
    pole index on the raised :class:`PivotBreakdown` (attribute ``pole``).
    """
    analysis = analyze(H, **analyze_kwargs)
    gamma = None
    for l, (z, w) in enumerate(zip(poles.poles, poles.weights)):
        A = build_shifted(H, S, z)
        try:
            inv = run(A, analysis=analysis, grid=grid, pivot_tol=pivot_tol).inverse
        except PivotBreakdown as exc:
            exc.pole = l
            exc.args = (f"pole {l + 1} (z={z}): {exc.args[0]}",)
            raise
        if gamma is None:
            gamma = SelectedInverse(
                inv.bp, inv.perm,
                [w * d for d in inv.diag],
                [w * b for b in inv.lower],
                [w * b for b in inv.upper],
                meta={"poles": len(poles)},
            )
        else:
            for K in range(inv.bp.count):
                gamma.diag[K] += w * inv.diag[K]
                gamma.lower[K] += w * inv.lower[K]
                gamma.upper[K] += w * inv.upper[K]
    return gamma


def shifted_accuracy(H: CSCMatrix, S: Optional[CSCMatrix], z, **kwargs) -> float:
    """``E(z)`` for ``A(z) = H - z S`` through the full pipeline."""
    A = build_shifted(H, S, z)
    return accuracy_metric(run(A, **kwargs).inverse, A)
