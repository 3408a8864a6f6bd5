"""Command-line interface: ``selinv invert | check | trace``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import verify
from .inverse import accuracy_metric
from .kernels import PivotBreakdown
from .ordering import PermutationError, load_permutation
from .parallel import DeadlockError, ProcessorGrid, build_schedule, parallel_selected_inversion
from .pipeline import analyze, factor_matrix, run
from .sparse import (
    CSCMatrix, MatrixMarketError, PatternError, build_shifted, coord_to_csc,
    read_matrix_market, write_matrix_market,
)
from .symbolic import DEFAULT_RELAX_FILL_RATIO, DEFAULT_RELAX_MAX_COLS

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ACCURACY = 1
EXIT_USAGE = 2
EXIT_BREAKDOWN = 3

GENERATORS = ("laplacian2d", "random_spd", "shifted_indefinite", "tridiagonal", "balanced_tree")

# tolerances used by ``check``
TOL_REAL = 1e-10
TOL_COMPLEX = 1e-8
TOL_E = 1e-10


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: Optional[str] = None
    S: Optional[str] = None
    shift: Optional[str] = None
    order: str = "mindeg"
    relax_max_cols: int = DEFAULT_RELAX_MAX_COLS
    relax_fill_ratio: float = DEFAULT_RELAX_FILL_RATIO
    grid: str = "1x1"
    deterministic: bool = False
    out: Optional[str] = None
    report: Optional[str] = None
    trace: Optional[str] = None
    gen: Optional[str] = None
    n: Optional[int] = None
    density: float = 0.1
    seed: int = 0

    def validate(self):
        if (self.input is None) == (self.gen is None):
            raise UsageError("give exactly one of --in or --gen")
        if self.gen is not None and self.gen not in GENERATORS:
            raise UsageError(f"unknown generator {self.gen!r}; choose from {', '.join(GENERATORS)}")
        if self.gen is not None and (self.n is None or self.n < 1):
            raise UsageError("--gen needs a positive --n")
        if self.relax_max_cols < 1:
            raise UsageError("--relax-max-cols must be at least 1")
        if not 0 <= self.relax_fill_ratio <= 1:
            raise UsageError("--relax-fill-ratio must lie in [0, 1]")
        self.processor_grid()
        self.z()
        if not (self.order in ("mindeg", "natural") or self.order.startswith("file:")):
            raise UsageError("--order must be mindeg, natural or file:<path>")

    def processor_grid(self) -> ProcessorGrid:
        try:
            return ProcessorGrid.parse(self.grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    @property
    def mode(self) -> str:
        g = self.processor_grid()
        return "seq" if g.size == 1 else "par"

    def z(self) -> Optional[complex]:
        if self.shift is None:
            return None
        try:
            re, im = (float(t) for t in self.shift.split(","))
        except ValueError:
            raise UsageError(f"--shift must look like 're,im', got {self.shift!r}") from None
        return complex(re, im)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="input", metavar="PATH", help="Matrix Market file holding H")
    common.add_argument("--S", metavar="PATH", help="overlap matrix S (default: identity)")
    common.add_argument("--shift", metavar="RE,IM", help="invert H - z S with z = RE + i IM")
    common.add_argument("--order", help="mindeg, natural or file:<path> (1-based permutation)")
    common.add_argument("--relax-max-cols", type=int, help="largest relaxed supernode")
    common.add_argument("--relax-fill-ratio", type=float, help="allowed explicit-zero fraction (0 = exact supernodes)")
    common.add_argument("--grid", metavar="PRxPC", help="worker grid; 1x1 runs sequentially")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="fix the reduction order (bitwise reproducible)")
    common.add_argument("--out", metavar="PATH", help="write the selected inverse (Matrix Market)")
    common.add_argument("--report", metavar="PATH", help="write a JSON report")
    common.add_argument("--trace", metavar="PATH", help="write the message trace")
    common.add_argument("--gen", help=f"built-in matrix: {', '.join(GENERATORS)}")
    common.add_argument("--n", type=int, help="size parameter of the generator")
    common.add_argument("--density", type=float, help="generator density")
    common.add_argument("--seed", type=int, help="generator seed")
    common.add_argument("--config", metavar="JSON", help="RunConfig file; flags take precedence")
    common.add_argument("--corrupt-factor", action="store_true", help=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="selinv", description="Selected inversion of sparse symmetric matrices.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("invert", parents=[common], help="compute and write the selected inverse")
    sub.add_parser("check", parents=[common], help="compare against a dense inverse (n <= 256)")
    sub.add_parser("trace", parents=[common], help="run the grid engine and write its message trace")
    return parser


def _make_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {ns.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {ns.config} is not valid JSON: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        data = {("input" if k == "in" else k): v for k, v in data.items()}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    cfg.validate()
    return cfg


def _read(path: str) -> CSCMatrix:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return coord_to_csc(read_matrix_market(path))


def _load_matrix(cfg: RunConfig) -> CSCMatrix:
    z = cfg.z()
    if cfg.gen is not None:
        g = cfg.gen
        if g == "laplacian2d":
            H = verify.laplacian2d(cfg.n)
        elif g == "random_spd":
            H = verify.random_spd(cfg.n, cfg.density, cfg.seed)
        elif g == "shifted_indefinite":
            H = verify.random_symmetric(cfg.n, cfg.density, cfg.seed)
            if z is None:
                z = 1e-3j
        elif g == "tridiagonal":
            H = verify.tridiagonal(cfg.n, cfg.seed)
        else:
            H = verify.balanced_tree(cfg.n, cfg.seed)
    else:
        H = _read(cfg.input)
    if cfg.S is None and z is None:
        return H
    S = _read(cfg.S) if cfg.S is not None else None
    return build_shifted(H, S, 0.0 if z is None else z)


def _ordering(cfg: RunConfig, n: int):
    if cfg.order.startswith("file:"):
        path = cfg.order[5:]
        if not Path(path).exists():
            raise FileNotFoundError(path)
        return load_permutation(path, n)
    return cfg.order


def _corrupt(F):
    F.diag[0][0, 0] *= 1.0 + 1e-3


def _finite(x):
    return float(x) if math.isfinite(x) else None


def _report(cfg, A, result, E) -> dict:
    an = result.analysis
    g = cfg.processor_grid()
    return {
        "schema_version": SCHEMA_VERSION,
        "status": "ok",
        "n": int(A.n),
        "nnzA": int(A.full_nnz()),
        "nnzL": int(an.bp.nnz_l()),
        "supernodes": int(an.bp.count),
        "grid": [g.pr, g.pc],
        "mode": cfg.mode,
        "deterministic": bool(cfg.deterministic),
        "ordering": cfg.order,
        "complex": bool(A.is_complex),
        "timings": {k: float(result.timings[k]) for k in ("symbolic", "factor", "selinv")},
        "E": _finite(E),
    }


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def _pipeline(cfg: RunConfig, A: CSCMatrix):
    g = cfg.processor_grid()
    return run(
        A,
        grid=None if g.size == 1 else (g.pr, g.pc),
        deterministic=bool(cfg.deterministic),
        ordering=_ordering(cfg, A.n),
        relax_max_cols=cfg.relax_max_cols,
        relax_fill_ratio=cfg.relax_fill_ratio,
        factor_hook=_corrupt if cfg.corrupt_factor else None,
    )


def cmd_invert(cfg: RunConfig) -> int:
    A = _load_matrix(cfg)
    result = _pipeline(cfg, A)
    E = accuracy_metric(result.inverse, A)
    rep = _report(cfg, A, result, E)
    if cfg.out:
        write_matrix_market(cfg.out, result.inverse.to_coord(),
                            comment="selected inverse, lower triangle, original numbering")
    if cfg.report:
        _write_json(cfg.report, rep)
    print(f"n={rep['n']} nnzA={rep['nnzA']} nnzL={rep['nnzL']} supernodes={rep['supernodes']} "
          f"grid={cfg.grid} E={E:.3e}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    A = _load_matrix(cfg)
    if A.n > verify.ORACLE_MAX_N:
        raise UsageError(f"dense oracle refused: n={A.n} exceeds {verify.ORACLE_MAX_N}")
    result = _pipeline(cfg, A)
    E = accuracy_metric(result.inverse, A)
    cmp = verify.compare_selected(result.inverse, verify.dense_selected_oracle(A))
    tol = TOL_COMPLEX if A.is_complex else TOL_REAL
    err = cmp.max_columnwise
    ok = err <= tol and E <= TOL_E
    print(cmp)
    print(f"E = {E:.3e}")
    print(f"{'PASS' if ok else 'FAIL'}: max column-wise error {err:.3e} (tolerance {tol:g}), E {E:.3e} (tolerance {TOL_E:g})")
    if cfg.report:
        rep = _report(cfg, A, result, E)
        rep.update(status="pass" if ok else "fail", max_columnwise=_finite(cmp.max_columnwise),
                   max_entrywise=_finite(cmp.max_entrywise), compared=cmp.count)
        _write_json(cfg.report, rep)
    return EXIT_OK if ok else EXIT_ACCURACY


def cmd_trace(cfg: RunConfig) -> int:
    A = _load_matrix(cfg)
    grid = cfg.processor_grid()
    an = analyze(A, ordering=_ordering(cfg, A.n), relax_max_cols=cfg.relax_max_cols,
                 relax_fill_ratio=cfg.relax_fill_ratio)
    F = factor_matrix(A, an)
    sched = build_schedule(an.etree, grid, an.bp)
    prun = parallel_selected_inversion(F, grid, perm=an.perm, schedule=sched,
                                       mode="deterministic" if cfg.deterministic else "fast")
    tr = prun.trace
    path = cfg.trace or "trace.log"
    tr.write(path)
    violations = tr.dependency_violations()
    summary = {
        "schema_version": SCHEMA_VERSION,
        "grid": [grid.pr, grid.pc],
        "supernodes": int(an.bp.count),
        "n_s": sched.n_levels,
        "messages": len(tr.outgoing()),
        "inter_rank_messages": len([e for e in tr.inter_rank() if e.kind != "recv"]),
        "dependency_violations": len(violations),
        "levels": tr.concurrency_summary(sched),
    }
    print(f"trace written to {path}")
    print(f"supernodes={summary['supernodes']} n_s={summary['n_s']} messages={summary['messages']} "
          f"inter-rank={summary['inter_rank_messages']} violations={len(violations)}")
    for lv in summary["levels"]:
        print(f"  sigma={lv['sigma']}: {len(lv['supernodes'])} supernodes, "
              f"{lv['overlapping_pairs']} overlapping pairs")
    if cfg.report:
        _write_json(cfg.report, summary)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_ACCURACY if violations else EXIT_OK


COMMANDS = {"invert": cmd_invert, "check": cmd_check, "trace": cmd_trace}


def _fail(cfg, code, kind, message, **extra):
    print(f"error: {kind}: {message}", file=sys.stderr)
    if cfg is not None and cfg.report:
        try:
            _write_json(cfg.report, {"schema_version": SCHEMA_VERSION, "status": "error",
                                     "error": {"type": kind, "message": message, **extra}})
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    cfg = None
    try:
        cfg = _make_config(ns)
        cfg.corrupt_factor = bool(ns.corrupt_factor)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        return _fail(cfg, EXIT_USAGE, "usage", str(exc))
    except FileNotFoundError as exc:
        path = exc.filename or (exc.args[0] if exc.args else "")
        return _fail(cfg, EXIT_USAGE, "io", f"file not found: {path}", path=str(path))
    except (MatrixMarketError, PermutationError, OSError) as exc:
        return _fail(cfg, EXIT_USAGE, "io", str(exc))
    except PatternError as exc:
        return _fail(cfg, EXIT_USAGE, "pattern", str(exc))
    except PivotBreakdown as exc:
        return _fail(cfg, EXIT_BREAKDOWN, "breakdown", str(exc),
                     supernode=None if exc.supernode is None else exc.supernode + 1)
    except (DeadlockError, np.linalg.LinAlgError) as exc:
        return _fail(cfg, EXIT_BREAKDOWN, "breakdown", str(exc))


if __name__ == "__main__":
    sys.exit(main())
