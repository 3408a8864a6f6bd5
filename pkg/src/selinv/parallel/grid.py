"""Processor grid and 2D block-cyclic ownership."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ProcessorGrid:
    """A ``pr x pc`` grid of worker ranks.

    Internally ranks and supernodes are 0-based; :func:`map_block` offers
    the 1-based labelling (``P1 .. P(pr*pc)``) used in reports and traces.
    """

    pr: int
    pc: int

    def __post_init__(self):
        if self.pr < 1 or self.pc < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.pr}x{self.pc}")

    @classmethod
    def parse(cls, text: str) -> "ProcessorGrid":
        """Parse ``"PRxPC"``, e.g. ``"4x3"``."""
        try:
            pr, pc = (int(t) for t in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"grid must look like 'PRxPC', got {text!r}") from None
        return cls(pr, pc)

    @property
    def size(self) -> int:
        return self.pr * self.pc

    def rank(self, r: int, c: int) -> int:
        """Rank at grid row ``r`` and column ``c`` (0-based)."""
        return r * self.pc + c

    def coords(self, rank: int):
        return divmod(rank, self.pc)

    def owner(self, I: int, J: int) -> int:
        """0-based owner of block ``(I, J)`` (0-based supernodes)."""
        return (I % self.pr) * self.pc + (J % self.pc)

    def row_group(self, rank: int):
        r, _ = self.coords(rank)
        return [self.rank(r, c) for c in range(self.pc)]

    def col_group(self, rank: int):
        _, c = self.coords(rank)
        return [self.rank(r, c) for r in range(self.pr)]

    def __str__(self):
        return f"{self.pr}x{self.pc}"


def map_block(I: int, J: int, grid: ProcessorGrid) -> int:
    """1-based owner label of the 1-based block ``(I, J)``:
    ``mod(I-1, Pr) * Pc + mod(J-1, Pc) + 1``."""
    if I < 1 or J < 1:
        raise ValueError("block coordinates are 1-based")
    return ((I - 1) % grid.pr) * grid.pc + (J - 1) % grid.pc + 1
