"""Command-line front end.

    dpmarginal PROGRAM.scm [--solver newton] [--normalize] [--stats] [--emit dot]
    dpmarginal --example game
    dpmarginal --bench-depths 1,2,3,4

Results go to standard output as one JSON document.  Failures print a
one-line JSON error object and exit with 1 (syntax/runtime), 2 (budget),
3 (no convergence) or 4 (zero mass).
"""

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import bundled
from . import syntax as S
from .compile import DEFAULT_NODE_BUDGET, DEFAULT_TASK_BUDGET, build_fspn
from .errors import DPError, ProgramRuntimeError, exit_code
from .fspn import emit_dot, emit_json
from .solve import DEFAULT_MAX_ITER, DEFAULT_TOL, marginal

USAGE_EXIT = 64


@dataclass
class RunConfig:
    input_path: str = None
    example: str = None
    solver: str = "fixpoint"
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    task_budget: int = DEFAULT_TASK_BUDGET
    node_budget: int = DEFAULT_NODE_BUDGET
    normalize: bool = False
    emit: str = "none"
    emit_path: str = None
    stats: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter <= 0 or self.task_budget <= 0 or self.node_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.solver not in ("fixpoint", "newton"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.emit not in ("none", "dot", "fspn-json"):
            raise ValueError(f"unknown emit format {self.emit!r}")


def _finite(x):
    return x if isinstance(x, float) and math.isfinite(x) else (None if isinstance(x, float) else x)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj


def _artifact_path(config):
    if config.emit_path:
        return Path(config.emit_path)
    suffix = ".dot" if config.emit == "dot" else ".fspn.json"
    if config.input_path:
        p = Path(config.input_path)
        return p.with_name(p.stem + suffix)
    return Path(config.example + suffix)


def _error_doc(exc, text):
    doc = exc.to_json()
    if isinstance(exc, ProgramRuntimeError) and exc.span is not None and text:
        doc["line"], doc["column"] = S.line_col(text, exc.span[0])
    return _clean(doc)


def run(config, out=None):
    """Run the pipeline for one program.  Returns the exit status."""
    out = out or sys.stdout
    text = None
    try:
        t0 = time.perf_counter()
        if config.example:
            text = bundled.source(config.example)
        else:
            text = Path(config.input_path).read_text(encoding="utf-8")
        program = S.parse_program(text)
        t1 = time.perf_counter()
        g, state = build_fspn(program, task_budget=config.task_budget, node_budget=config.node_budget)
        t2 = time.perf_counter()
        artifact = None
        if config.emit != "none":
            artifact = _artifact_path(config)
            artifact.write_text(emit_dot(g) if config.emit == "dot" else emit_json(g), encoding="utf-8")
        dist, report = marginal(g, state, method=config.solver, tol=config.tol,
                                max_iter=config.max_iter, normalize=config.normalize)
        t3 = time.perf_counter()
    except DPError as exc:
        print(json.dumps(_error_doc(exc, text)), file=out)
        return exit_code(exc)
    except (OSError, KeyError) as exc:
        print(json.dumps({"error": "InputError", "message": str(exc)}), file=out)
        return 1

    doc = {"distribution": dist.to_json(), "totalMass": dist.total_mass}
    if artifact is not None:
        doc["artifact"] = str(artifact)
    if config.stats:
        counts = g.counts()
        doc["stats"] = {
            "nodes": counts["nodes"],
            "edges": counts["edges"],
            "roots": counts["roots"],
            "nodesByKind": counts["by_kind"],
            "tasks": state.tasks_run,
            "solver": report.to_json(),
            "timings": {"parse": t1 - t0, "compile": t2 - t1, "solve": t3 - t2},
        }
    else:
        doc["stats"] = {}
    print(json.dumps(_clean(doc)), file=out)
    return 0


def bench(depths, solver="fixpoint", tol=DEFAULT_TOL):
    """Compile and solve the scalar-implicature model at each depth."""
    rows = []
    for d in depths:
        t0 = time.perf_counter()
        g, state = build_fspn(S.parse_program(bundled.implicature_source(d)))
        t1 = time.perf_counter()
        dist, report = marginal(g, state, method=solver, tol=tol)
        t2 = time.perf_counter()
        counts = g.counts()
        rows.append({
            "depth": d,
            "nodes": counts["nodes"],
            "edges": counts["edges"],
            "roots": counts["roots"],
            "sccCount": len(report.components),
            "totalMass": dist.total_mass,
            "compileSeconds": t1 - t0,
            "solveSeconds": t2 - t1,
        })
    return rows


def _depths(text):
    try:
        ds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad depth list {text!r}") from None
    if not ds or any(d < 0 for d in ds):
        raise argparse.ArgumentTypeError("depths must be non-negative integers")
    return ds


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "UsageError", "message": message}))
        sys.exit(USAGE_EXIT)


def make_parser():
    p = _Parser(prog="dpmarginal", description="Exact marginal distribution of a probabilistic program.")
    p.add_argument("program", nargs="?", help="program file (s-expressions)")
    p.add_argument("--example", choices=sorted(bundled.EXAMPLES), help="run a bundled example instead")
    p.add_argument("--list-examples", action="store_true", help="list bundled examples and exit")
    p.add_argument("--solver", choices=["fixpoint", "newton"], default="fixpoint")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--task-budget", type=int, default=DEFAULT_TASK_BUDGET)
    p.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    p.add_argument("--normalize", action="store_true", help="divide by the total mass")
    p.add_argument("--emit", choices=["none", "dot", "fspn-json"], default="none")
    p.add_argument("--emit-path", help="where to write the emitted network")
    p.add_argument("--stats", action="store_true", help="include network and solver statistics")
    p.add_argument("--bench-depths", type=_depths, metavar="D1,D2,...",
                   help="benchmark the scalar-implicature model at these depths")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.list_examples:
        print(json.dumps({"examples": sorted(bundled.EXAMPLES)}))
        return 0
    if args.bench_depths is not None:
        try:
            rows = bench(args.bench_depths, solver=args.solver, tol=args.tol)
        except DPError as exc:
            print(json.dumps(_error_doc(exc, None)))
            return exit_code(exc)
        print(json.dumps({"bench": _clean(rows)}))
        return 0
    if bool(args.program) == bool(args.example):
        make_parser().error("give exactly one of PROGRAM or --example")
    try:
        config = RunConfig(
            input_path=args.program, example=args.example, solver=args.solver, tol=args.tol,
            max_iter=args.max_iter, task_budget=args.task_budget, node_budget=args.node_budget,
            normalize=args.normalize, emit=args.emit, emit_path=args.emit_path, stats=args.stats,
        )
    except ValueError as exc:
        make_parser().error(str(exc))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
