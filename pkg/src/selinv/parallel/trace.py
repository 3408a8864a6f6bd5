"""Event log of a parallel run and checks computed from it."""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

MESSAGE_KINDS = ("send", "bcast", "reduce", "recv")


@dataclass(frozen=True)
class Event:
    """One trace record.  Ranks, supernodes and blocks are 0-based here.

    Message events use ``kind`` in :data:`MESSAGE_KINDS`; bookkeeping events
    use ``launch`` (a rank starts its part of a task), ``term`` (a block
    product for ``K`` read block ``(I, J)``) and ``final`` (block ``(I, J)``
    now holds its inverse value).
    """

    seq: int
    rank: int
    kind: str
    step: str
    K: int
    I: int
    J: int
    src: int = -1
    dst: int = -1
    nbytes: int = 0

    @property
    def is_message(self) -> bool:
        return self.kind in MESSAGE_KINDS

    def tag(self) -> str:
        return f"{self.K + 1}.{self.I + 1}.{self.J + 1}"

    def line(self) -> str:
        return (f"{self.rank + 1} {self.kind}:{self.step} {self.tag()} "
                f"{self.src + 1} {self.dst + 1} {self.nbytes}")


class Trace:
    """Thread-safe, globally sequenced event recorder."""

    def __init__(self):
        self._lock = threading.Lock()
        self.events: List[Event] = []

    def record(self, rank, kind, step, K, I, J, src=-1, dst=-1, nbytes=0) -> Event:
        with self._lock:
            ev = Event(len(self.events), rank, kind, step, K, I, J, src, dst, nbytes)
            self.events.append(ev)
        return ev

    # -- views -------------------------------------------------------------

    def messages(self, kind: Optional[str] = None, step: Optional[str] = None,
                 K: Optional[int] = None) -> List[Event]:
        out = []
        for ev in self.events:
            if not ev.is_message:
                continue
            if kind is not None and ev.kind != kind:
                continue
            if step is not None and ev.step != step:
                continue
            if K is not None and ev.K != K:
                continue
            out.append(ev)
        return out

    def outgoing(self, **kw) -> List[Event]:
        """Message events on the sending side (everything but ``recv``)."""
        return [ev for ev in self.messages(**kw) if ev.kind != "recv"]

    def inter_rank(self) -> List[Event]:
        return [ev for ev in self.messages() if ev.src != ev.dst]

    def lines(self) -> List[str]:
        """Message events grouped by rank, each rank in time order."""
        evs = sorted(self.messages(), key=lambda e: (e.rank, e.seq))
        return [ev.line() for ev in evs]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# rank step tag src dst bytes\n")
            for line in self.lines():
                fh.write(line + "\n")

    def launch_order(self) -> Dict[int, List[int]]:
        order = defaultdict(list)
        for ev in self.events:
            if ev.kind == "launch":
                order[ev.rank].append(ev.K)
        return dict(order)

    # -- checks ------------------------------------------------------------

    def dependency_violations(self) -> List[str]:
        """Reads of inverse blocks that are not preceded by their finalization.

        Every block product for supernode ``K`` reads a block ``(J, I)`` of
        the inverse with ``J, I`` in the structure of ``K``; the block must
        have been finalized (computed, or received as a mirror) on the
        reading rank beforehand.  A reduction message for ``K`` must in turn
        follow every product it carries.
        """
        final_at: Dict[Tuple[int, int, int], int] = {}
        problems = []
        last_term: Dict[Tuple[int, int, int], int] = {}
        for ev in self.events:
            if ev.kind == "final":
                final_at.setdefault((ev.rank, ev.I, ev.J), ev.seq)
            elif ev.kind == "term":
                f = final_at.get((ev.rank, ev.I, ev.J))
                if f is None or f > ev.seq:
                    problems.append(
                        f"rank {ev.rank + 1} read block ({ev.I + 1},{ev.J + 1}) for "
                        f"supernode {ev.K + 1} before it was final"
                    )
                last_term[(ev.rank, ev.K, ev.I)] = ev.seq
            elif ev.kind == "reduce" and ev.step == "ainv":
                t = last_term.get((ev.rank, ev.K, ev.I))
                if t is None:
                    problems.append(
                        f"rank {ev.rank + 1} sent a reduction for block "
                        f"({ev.I + 1},{ev.K + 1}) without computing any product"
                    )
        return problems

    def intervals(self, pass_steps=("lhat", "ainv", "diag", "mirror")) -> Dict[int, Tuple[int, int]]:
        """First and last event of every supernode in the inversion pass."""
        span: Dict[int, List[int]] = {}
        for ev in self.events:
            if ev.step not in pass_steps:
                continue
            lo_hi = span.setdefault(ev.K, [ev.seq, ev.seq])
            lo_hi[1] = ev.seq
        return {K: (v[0], v[1]) for K, v in span.items()}

    def concurrency_summary(self, schedule) -> List[dict]:
        """Per priority level: its supernodes and how many pairs ran overlapped."""
        iv = self.intervals()
        out = []
        for k, level in enumerate(schedule.levels, start=1):
            pairs = 0
            for a in range(len(level)):
                for b in range(a + 1, len(level)):
                    x, y = iv.get(level[a]), iv.get(level[b])
                    if x and y and x[0] <= y[1] and y[0] <= x[1]:
                        pairs += 1
            out.append({
                "sigma": k,
                "supernodes": [K + 1 for K in level],
                "overlapping_pairs": pairs,
            })
        return out
