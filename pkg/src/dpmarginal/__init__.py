"""Exact marginal inference for discrete, possibly recursive probabilistic programs.

Typical use::

    from dpmarginal import marginalize
    dist, report, *_ = marginalize("(define (f) (if (flip .5) 0 (f))) (f)")
"""

import time

from . import syntax
from .compile import build_fspn
from .errors import (
    BudgetExceeded,
    DPError,
    MissingReference,
    NoConvergence,
    ProgramRuntimeError,
    ProgramSyntaxError,
    StepBudgetExceeded,
    ZeroMass,
)
from .fspn import Fspn, emit_dot, emit_json, evaluate
from .interp import InterpreterArg, RandomChoice, Subcall, Terminal, interpret, resume
from .solve import Distribution, SolveReport, extract_equations, marginal, scc_decompose, solve_component
from .syntax import free_variables, parse, parse_program

__all__ = [
    "BudgetExceeded", "DPError", "Distribution", "Fspn", "InterpreterArg", "MissingReference",
    "NoConvergence", "ProgramRuntimeError", "ProgramSyntaxError", "RandomChoice", "SolveReport",
    "StepBudgetExceeded", "Subcall", "Terminal", "ZeroMass", "build_fspn", "emit_dot", "emit_json",
    "evaluate", "extract_equations", "free_variables", "interpret", "marginal", "marginalize",
    "parse", "parse_program", "resume", "scc_decompose", "solve_component", "syntax",
]


def marginalize(text, *, solver="fixpoint", tol=1e-10, max_iter=10**6, normalize=False,
                task_budget=10**7, node_budget=10**7):
    """Parse, compile and solve ``text``.

    Returns ``(distribution, report, fspn, compile_state, timings)``.
    """
    t0 = time.perf_counter()
    program = parse_program(text)
    t1 = time.perf_counter()
    g, state = build_fspn(program, task_budget=task_budget, node_budget=node_budget)
    t2 = time.perf_counter()
    dist, report = marginal(g, state, method=solver, tol=tol, max_iter=max_iter, normalize=normalize)
    t3 = time.perf_counter()
    timings = {"parse": t1 - t0, "compile": t2 - t1, "solve": t3 - t2}
    return dist, report, g, state, timings
