"""Priority lists over the elimination tree and per-supernode participants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Set

import numpy as np

from ..symbolic import BlockPattern, EliminationTree
from .grid import ProcessorGrid


@dataclass
class PrioritySchedule:
    """``sigma[K]`` is the priority of supernode ``K`` (1 = first).

    ``levels[k - 1]`` lists the supernodes with priority ``k`` in ascending
    order and ``procmap[K]`` the ranks taking part in inverting ``K``.
    """

    sigma: np.ndarray
    levels: List[List[int]]
    procmap: List[Set[int]]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def task_order(self, rank: int) -> List[int]:
        """Supernodes handled by ``rank``, highest priority first."""
        out = []
        for level in self.levels:
            out.extend(K for K in sorted(level, reverse=True) if rank in self.procmap[K])
        return out


def assign_priorities(parent) -> np.ndarray:
    """Roots get priority 1 and every other node its parent's priority plus one.

    ``parent`` must be postordered (``parent[K] > K``).
    """
    parent = np.asarray(parent)
    N = len(parent)
    sigma = np.zeros(N, dtype=np.int64)
    for K in range(N - 1, -1, -1):
        p = parent[K]
        if p < 0:
            sigma[K] = 1
        else:
            if p <= K:
                raise ValueError("elimination tree is not postordered")
            sigma[K] = sigma[p] + 1
    return sigma


def participants(bp: BlockPattern, grid: ProcessorGrid, K: int) -> Set[int]:
    """Owners of every block read or written while inverting supernode ``K``."""
    C = bp.index_set(K)
    ranks = {grid.owner(K, K)}
    for J in C:
        ranks.add(grid.owner(J, K))
        ranks.add(grid.owner(K, J))
        for I in C:
            ranks.add(grid.owner(J, I))
    return ranks


def build_schedule(etree: EliminationTree, grid: ProcessorGrid, bp: BlockPattern) -> PrioritySchedule:
    sigma = assign_priorities(etree.parent)
    n_s = int(sigma.max()) if len(sigma) else 0
    levels: List[List[int]] = [[] for _ in range(n_s)]
    for K in range(len(sigma)):
        levels[sigma[K] - 1].append(K)
    procmap = [participants(bp, grid, K) for K in range(len(sigma))]
    return PrioritySchedule(sigma, levels, procmap)


def schedule_table(schedule: PrioritySchedule) -> Dict[int, int]:
    """``{supernode: priority}`` with 1-based supernode labels."""
    return {K + 1: int(s) for K, s in enumerate(schedule.sigma)}
