"""Message-passing selected inversion over a grid of worker threads.

Each rank owns the blocks that the block-cyclic map assigns to it and
touches nothing else.  Data moves only through value-copied messages put
on the receiving rank's inbox.  The run has two passes separated by a
barrier:

* normalization: the owner of ``L_KK`` broadcasts it to the owners of the
  blocks ``L[I, K]``; each of those forms ``L^[I, K]`` and sends it across
  the diagonal to the owner of ``U[K, I]``;
* inversion: per supernode ``K`` the owners of ``U^[K, I]`` broadcast them
  down their process columns, the owners of inverse blocks ``(J, I)`` form
  the products, these are reduced onto the owners of ``(J, K)``, which in
  turn feed the diagonal update on the owner of ``(K, K)`` and mirror their
  result to ``(K, J)``.

Ranks start their tasks in priority order; a rank moves on to the next
priority level once its own share of the current level is finished.
"""

from __future__ import annotations

import queue
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .. import kernels
from ..factor import BlockFactor
from ..inverse import SelectedInverse, piece_index
from ..ordering import Permutation
from ..symbolic import BlockPattern
from .grid import ProcessorGrid
from .schedule import PrioritySchedule, build_schedule
from .trace import Trace

MODES = ("deterministic", "fast")


class DeadlockError(RuntimeError):
    """No rank made progress within the watchdog timeout."""

    def __init__(self, message, pending=None):
        super().__init__(message)
        self.pending = pending or {}


@dataclass
class LocalStore:
    """Blocks held by one rank, keyed by 0-based ``(row supernode, col supernode)``."""

    rank: int
    blocks: Dict[tuple, np.ndarray] = field(default_factory=dict)

    def nbytes(self) -> int:
        return sum(b.nbytes for b in self.blocks.values())


def distribute_factor(F: BlockFactor, grid: ProcessorGrid) -> List[LocalStore]:
    """Copy every block of ``F`` to its owner.

    ``(K, K)`` is the packed diagonal factor, ``(I, K)`` with ``I > K`` a
    block of ``L`` and ``(K, I)`` the matching block of ``U``.
    """
    bp = F.bp
    stores = [LocalStore(r) for r in range(grid.size)]
    for K in range(bp.count):
        stores[grid.owner(K, K)].blocks[(K, K)] = np.array(F.diag[K])
        for b, I in enumerate(bp.block_sups[K]):
            I = int(I)
            stores[grid.owner(I, K)].blocks[(I, K)] = np.array(F.lower_block(K, b))
            stores[grid.owner(K, I)].blocks[(K, I)] = np.array(F.upper_block(K, b))
    return stores


def gather_blocks(stores: List[LocalStore], bp: BlockPattern, dtype):
    """Assemble ``(diag, lower, upper)`` panels from the rank stores."""
    N = bp.count
    diag, lower, upper = [None] * N, [None] * N, [None] * N
    owner = {}
    for st in stores:
        for key in st.blocks:
            owner[key] = st
    for K in range(N):
        s = bp.partition.size(K)
        r = len(bp.rows[K])
        diag[K] = owner[(K, K)].blocks[(K, K)]
        lower[K] = np.empty((r, s), dtype=dtype)
        upper[K] = np.empty((s, r), dtype=dtype)
        ptr = bp.block_ptr[K]
        for b, I in enumerate(bp.block_sups[K]):
            I = int(I)
            span = slice(int(ptr[b]), int(ptr[b + 1]))
            lower[K][span] = owner[(I, K)].blocks[(I, K)]
            upper[K][:, span] = owner[(K, I)].blocks[(K, I)]
    return diag, lower, upper


@dataclass
class Message:
    kind: str
    step: str
    K: int
    block: tuple
    src: int
    dst: int
    payload: object

    @property
    def nbytes(self) -> int:
        p = self.payload
        if isinstance(p, np.ndarray):
            return int(p.nbytes)
        return int(sum(a.nbytes for _, a in p))


def _copy_payload(p):
    if isinstance(p, np.ndarray):
        return np.array(p, copy=True)
    return [(i, np.array(a, copy=True)) for i, a in p]


class _Task:
    """State of one rank's share of supernode ``K``."""

    def __init__(self, K: int, rank: int, bp: BlockPattern, grid: ProcessorGrid):
        self.K = K
        C = [int(I) for I in bp.block_sups[K]]
        self.C = C
        own = grid.owner
        self.lhat: Dict[int, np.ndarray] = {}
        self.lhat_sources = [I for I in C if own(K, I) == rank]
        self.pending: Dict[int, set] = {}
        for J in C:
            mine = {I for I in C if own(J, I) == rank}
            if mine:
                self.pending[J] = mine
        self.terms: Dict[int, list] = defaultdict(list)
        self.reduced = set()
        self.ainv_targets = {J: len({own(J, I) for I in C}) for J in C if own(J, K) == rank}
        self.ainv_in: Dict[int, list] = defaultdict(list)
        self.ainv_done = set()
        self.diag_parts: List[tuple] = []
        self.diag_sent = not self.ainv_targets
        self.diag_owner = own(K, K) == rank
        self.diag_expect = len({own(J, K) for J in C})
        self.diag_in: List[tuple] = []
        self.diag_done = not self.diag_owner
        self.mirrors = {J for J in C if own(K, J) == rank}

    @property
    def done(self) -> bool:
        return (not self.pending and len(self.reduced) == len(self.terms)
                and len(self.ainv_done) == len(self.ainv_targets)
                and self.diag_sent and self.diag_done and not self.mirrors)

    def describe(self) -> List[str]:
        K = self.K + 1
        out = []
        for J, Is in self.pending.items():
            for I in sorted(Is):
                have = "lhat" if I in self.lhat else "no lhat"
                out.append(f"{K}.{J + 1}.{I + 1} product waiting ({have})")
        for J, n in self.ainv_targets.items():
            if J not in self.ainv_done:
                out.append(f"{K}.{J + 1}.{K} reduction {len(self.ainv_in[J])}/{n}")
        if not self.diag_done:
            out.append(f"{K}.{K}.{K} diagonal update {len(self.diag_in)}/{self.diag_expect}")
        for J in sorted(self.mirrors):
            out.append(f"{K}.{K}.{J + 1} mirror missing")
        return out


class _Worker:
    def __init__(self, engine: "_Engine", rank: int, store: LocalStore):
        self.e = engine
        self.rank = rank
        self.blocks = store.blocks
        self.inbox: "queue.Queue[Message]" = queue.Queue()
        self.final = set()
        self.tasks: Dict[int, _Task] = {}
        self.early: Dict[int, List[Message]] = defaultdict(list)
        self.norm_pending = 0
        self.pending_desc: List[str] = []

    # -- messaging ---------------------------------------------------------

    def send(self, kind, step, K, block, dst, payload):
        msg = Message(kind, step, K, block, self.rank, dst, _copy_payload(payload))
        self.e.trace.record(self.rank, kind, step, K, block[0], block[1],
                            self.rank, dst, msg.nbytes)
        if self.e.drop is not None and self.e.drop(msg):
            return
        self.e.workers[dst].inbox.put(msg)

    def receive(self, deadline_msg) -> Message:
        try:
            msg = self.inbox.get(timeout=self.e.timeout)
        except queue.Empty:
            raise DeadlockError(deadline_msg) from None
        if msg.kind == "abort":
            raise _Aborted()
        self.e.trace.record(self.rank, "recv", msg.step, msg.K, msg.block[0], msg.block[1],
                            msg.src, self.rank, msg.nbytes)
        return msg

    def mark_final(self, K, block):
        self.final.add(block)
        self.e.trace.record(self.rank, "final", "inv", K, block[0], block[1])

    # -- normalization pass ------------------------------------------------

    def normalize(self):
        bp, own = self.e.bp, self.e.grid.owner
        expected = 0
        for K in range(bp.count):
            C = [int(I) for I in bp.block_sups[K]]
            if any(own(I, K) == self.rank for I in C):
                expected += 1
            expected += sum(1 for I in C if own(K, I) == self.rank)
            if own(K, K) == self.rank and C:
                for dst in sorted({own(I, K) for I in C}):
                    self.send("bcast", "norm", K, (K, K), dst, self.blocks[(K, K)])
        self.norm_pending = expected
        while self.norm_pending:
            msg = self.receive("normalization pass stalled")
            self.norm_pending -= 1
            K = msg.K
            if msg.step == "norm":
                for I in bp.block_sups[K]:
                    I = int(I)
                    if own(I, K) != self.rank:
                        continue
                    lhat = kernels.normalize_block(msg.payload, self.blocks[(I, K)])
                    self.blocks[(I, K)] = lhat
                    self.send("send", "cross", K, (I, K), own(K, I), lhat)
            else:
                I = msg.block[0]
                self.blocks[(K, I)] = kernels.transpose_copy(msg.payload)

    # -- inversion pass ----------------------------------------------------

    def launch(self, K):
        t = _Task(K, self.rank, self.e.bp, self.e.grid)
        self.tasks[K] = t
        self.e.trace.record(self.rank, "launch", "inv", K, K, K)
        own = self.e.grid.owner
        for I in t.lhat_sources:
            for dst in sorted({own(J, I) for J in t.C}):
                self.send("bcast", "lhat", K, (K, I), dst, self.blocks[(K, I)])
        for msg in self.early.pop(K, []):
            self.deliver(msg)
        self.progress(t)

    def deliver(self, msg: Message):
        t = self.tasks.get(msg.K)
        if t is None:
            self.early[msg.K].append(msg)
            return
        if msg.step == "lhat":
            t.lhat[msg.block[1]] = kernels.transpose_copy(msg.payload)
        elif msg.step == "ainv":
            t.ainv_in[msg.block[0]].append((msg.src, msg.payload))
        elif msg.step == "diag":
            t.diag_in.append((msg.src, msg.payload))
        elif msg.step == "mirror":
            J = msg.block[1]
            self.blocks[(msg.K, J)] = kernels.transpose_copy(msg.payload)
            t.mirrors.discard(J)
            self.mark_final(msg.K, (msg.K, J))
        else:
            raise RuntimeError(f"unexpected message step {msg.step!r}")
        self.progress(t)

    def progress(self, t: _Task):
        bp, own, det = self.e.bp, self.e.grid.owner, self.e.deterministic
        K = t.K
        rows = {J: bp.block_rows(K, J) for J in t.C}
        changed = True
        while changed:
            changed = False
            for J in list(t.pending):
                Is = t.pending[J]
                for I in sorted(Is):
                    if I in t.lhat and (J, I) in self.final:
                        ri, ci = piece_index(bp, J, I, rows[J], rows[I])
                        piece = kernels.take(self.blocks[(J, I)], ri, ci)
                        t.terms[J].append((I, kernels.gemm(piece, t.lhat[I])))
                        self.e.trace.record(self.rank, "term", "ainv", K, J, I)
                        Is.discard(I)
                if not Is:
                    del t.pending[J]
                    terms = sorted(t.terms[J], key=lambda x: x[0])
                    payload = terms if det else [(terms[0][0], kernels.reduce_terms([a for _, a in terms]))]
                    self.send("reduce", "ainv", K, (J, K), own(J, K), payload)
                    t.reduced.add(J)
                    changed = True
            for J, expect in t.ainv_targets.items():
                if J in t.ainv_done or len(t.ainv_in[J]) < expect:
                    continue
                if det:
                    parts = sorted((x for _, p in t.ainv_in[J] for x in p), key=lambda x: x[0])
                else:
                    parts = [x for _, p in t.ainv_in[J] for x in p]
                ainv = -kernels.reduce_terms([a for _, a in parts])
                lhat = self.blocks[(J, K)]
                t.diag_parts.append((J, kernels.gemm(lhat.T, ainv)))
                self.blocks[(J, K)] = ainv
                self.mark_final(K, (J, K))
                self.send("send", "mirror", K, (K, J), own(K, J), ainv)
                t.ainv_done.add(J)
                changed = True
            if not t.diag_sent and len(t.ainv_done) == len(t.ainv_targets):
                parts = sorted(t.diag_parts, key=lambda x: x[0])
                payload = parts if det else [(parts[0][0], kernels.reduce_terms([a for _, a in parts]))]
                self.send("reduce", "diag", K, (K, K), own(K, K), payload)
                t.diag_sent = True
                changed = True
            if not t.diag_done and len(t.diag_in) == t.diag_expect:
                d = kernels.diag_inverse(self.blocks[(K, K)])
                if t.diag_expect:
                    if det:
                        parts = sorted((x for _, p in t.diag_in for x in p), key=lambda x: x[0])
                    else:
                        parts = [x for _, p in t.diag_in for x in p]
                    d = d - kernels.reduce_terms([a for _, a in parts])
                self.blocks[(K, K)] = kernels.symmetrize(d)
                self.mark_final(K, (K, K))
                t.diag_done = True
                changed = True

    def invert(self):
        sched: PrioritySchedule = self.e.schedule
        for level in sched.levels:
            mine = [K for K in sorted(level, reverse=True) if self.rank in sched.procmap[K]]
            for K in mine:
                self.launch(K)
            while not all(self.tasks[K].done for K in mine):
                msg = self.receive("inversion pass stalled")
                self.deliver(msg)

    def pending(self) -> List[str]:
        out = [f"normalization: {self.norm_pending} messages outstanding"] if self.norm_pending else []
        for t in self.tasks.values():
            if not t.done:
                out.extend(t.describe())
        return out


class _Aborted(Exception):
    pass


class _Engine:
    def __init__(self, bp, grid, schedule, deterministic, timeout, drop):
        self.bp = bp
        self.grid = grid
        self.schedule = schedule
        self.deterministic = deterministic
        self.timeout = timeout
        self.drop = drop
        self.trace = Trace()
        self.workers: List[_Worker] = []


@dataclass
class ParallelRun:
    inverse: SelectedInverse
    trace: Trace
    schedule: PrioritySchedule
    grid: ProcessorGrid
    mode: str

    def message_trace(self) -> List[str]:
        return self.trace.lines()


def parallel_selected_inversion(
    F: BlockFactor,
    grid: ProcessorGrid,
    perm: Optional[Permutation] = None,
    mode: str = "deterministic",
    schedule: Optional[PrioritySchedule] = None,
    stores: Optional[List[LocalStore]] = None,
    timeout: float = 60.0,
    _drop=None,
) -> ParallelRun:
    """Selected inversion of ``F`` on ``grid``; ``F`` itself is not modified.

    ``mode="deterministic"`` orders every reduction by block index, which
    reproduces the sequential summation order exactly; ``"fast"`` lets each
    rank pre-sum its own products and adds partial sums in arrival order.
    A single-rank grid runs on the calling thread.  ``_drop`` is a test
    hook: messages for which it returns true are lost.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    bp = F.bp
    if schedule is None:
        schedule = build_schedule(bp.etree(), grid, bp)
    if stores is None:
        stores = distribute_factor(F, grid)
    elif len(stores) != grid.size:
        raise ValueError("one local store per rank is required")
    eng = _Engine(bp, grid, schedule, mode == "deterministic", timeout, _drop)
    eng.workers = [_Worker(eng, r, stores[r]) for r in range(grid.size)]
    need_norm = not F.normalized

    if grid.size == 1:
        w = eng.workers[0]
        try:
            if need_norm:
                w.normalize()
            w.invert()
        except DeadlockError as exc:
            raise DeadlockError(f"{exc}; pending: {w.pending()}", {1: w.pending()}) from None
    else:
        _run_threads(eng, need_norm)

    diag, lower, upper = gather_blocks(stores, bp, F.dtype)
    S = SelectedInverse(bp, perm if perm is not None else Permutation.identity(bp.n),
                        diag, lower, upper, meta={"grid": [grid.pr, grid.pc], "mode": mode})
    return ParallelRun(S, eng.trace, schedule, grid, mode)


def _run_threads(eng: _Engine, need_norm: bool):
    errors: Dict[int, BaseException] = {}
    barrier = threading.Barrier(len(eng.workers))
    abort = threading.Event()

    def stop_all():
        if not abort.is_set():
            abort.set()
            barrier.abort()
            for w in eng.workers:
                w.inbox.put(Message("abort", "", -1, (-1, -1), -1, -1, []))

    def body(w: _Worker):
        try:
            if need_norm:
                w.normalize()
            barrier.wait()
            w.invert()
        except (_Aborted, threading.BrokenBarrierError):
            pass
        except BaseException as exc:  # handed to the coordinator
            errors[w.rank] = exc
            stop_all()
        finally:
            w.pending_desc = w.pending()

    threads = [threading.Thread(target=body, args=(w,), name=f"rank{w.rank + 1}", daemon=True)
               for w in eng.workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        first = errors[min(errors)]
        if isinstance(first, DeadlockError):
            pending = {w.rank + 1: w.pending_desc for w in eng.workers if w.pending_desc}
            detail = "; ".join(f"P{r}: {', '.join(p)}" for r, p in pending.items())
            raise DeadlockError(f"{first} (no progress in {eng.timeout:g}s); pending {detail}",
                                pending)
        raise first
