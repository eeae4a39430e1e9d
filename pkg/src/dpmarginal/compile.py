"""Compile a program to an FSPN by driving the coroutine interpreter.

Every execution path is explored once per distinct subproblem.  A subcall
whose interpreter argument was seen before reuses that subproblem's root;
return values found later under a root are pushed to every waiting caller
through its callbacks.
"""

from collections import deque

from . import syntax as S
from .errors import BudgetExceeded
from .fspn import INDICATOR, PRODUCT, REF, ROOT, SUM, Fspn
from .interp import (
    DEFAULT_STEP_BUDGET,
    InterpreterArg,
    RandomChoice,
    Subcall,
    Terminal,
    interpret,
    resume,
)

DEFAULT_TASK_BUDGET = 10**7
DEFAULT_NODE_BUDGET = 10**7


class CompileState:
    """Bookkeeping of one compilation.

    ``terminals[r]`` is an insertion-ordered set (a dict with ``None``
    values) of the value ids known to be returned under root ``r``.
    """

    def __init__(self, step_budget=DEFAULT_STEP_BUDGET):
        self.step_budget = step_budget
        self.queue = deque()
        self.terminals = {}
        self.callbacks = {}
        self.subproblem = {}
        self.root_arg = {}
        self.tasks_run = 0

    def new_root(self, r, arg=None):
        self.terminals[r] = {}
        self.callbacks[r] = []
        self.root_arg[r] = arg


def process_terminal(g, state, root, v, prev, k):
    prod = g.add_node(PRODUCT, owner=g.root_of[prev])
    ref = g.add_node(REF, value=v, target=root, owner=g.root_of[prev])
    g.add_edge(prev, prod, 1.0)
    g.add_edge(prod, ref, 1.0)
    state.queue.append((lambda: resume(k, v, state.step_budget), prod, 1.0))


def build_fspn(program, *, task_budget=DEFAULT_TASK_BUDGET, node_budget=DEFAULT_NODE_BUDGET,
               step_budget=DEFAULT_STEP_BUDGET):
    """Build the FSPN of ``program`` (an expression id or a list of top-level forms)."""
    if not isinstance(program, int):
        program = S.program_expr(list(program))
    g = Fspn()
    state = CompileState(step_budget)
    r = g.add_node(ROOT)
    x_init = InterpreterArg(program, S.EMPTY_ENV)
    state.new_root(r, x_init)
    queue = state.queue
    queue.append((lambda: interpret(x_init, step_budget), r, 1.0))
    terminals, callbacks, subproblem = state.terminals, state.callbacks, state.subproblem

    while queue:
        f, prev, w = queue.popleft()
        state.tasks_run += 1
        if state.tasks_run > task_budget:
            raise BudgetExceeded(_budget_message("task", task_budget, g, state))
        if len(g) > node_budget:
            raise BudgetExceeded(_budget_message("node", node_budget, g, state))
        x = f()
        cls = x.__class__
        if cls is Terminal:
            v = x.value
            cur = g.add_node(INDICATOR, value=v, owner=g.root_of[prev])
            r = g.root_of[prev]
            known = terminals[r]
            if v not in known:
                for n2, k in callbacks[r]:
                    process_terminal(g, state, r, v, n2, k)
                known[v] = None
        elif cls is RandomChoice:
            cur = g.add_node(SUM, owner=g.root_of[prev])
            for v, p in zip(x.values, x.probs):
                queue.append((_resumer(x.k, v, step_budget), cur, float(p)))
        elif cls is Subcall:
            cur = g.add_node(SUM, owner=g.root_of[prev])
            s = x.arg
            r = subproblem.get(s)
            if r is None:
                r = g.add_node(ROOT)
                subproblem[s] = r
                state.new_root(r, s)
                queue.append((_interpreter(s, step_budget), r, 1.0))
            else:
                for v in list(terminals[r]):
                    process_terminal(g, state, r, v, cur, x.k)
            callbacks[r].append((cur, x.k))
        else:
            raise TypeError(f"interpreter returned {x!r}")
        g.add_edge(prev, cur, w)
    return g, state


def _resumer(k, v, budget):
    return lambda: resume(k, v, budget)


def _interpreter(s, budget):
    return lambda: interpret(s, budget)


def _budget_message(what, budget, g, state):
    worst = max(state.terminals, key=lambda r: (len(state.terminals[r]), -r))
    arg = state.root_arg.get(worst)
    where = S.expr_text(arg.expr, 60) if arg is not None else "?"
    return (
        f"{what} budget of {budget} exceeded; largest subproblem frontier is root {worst} "
        f"({where}) with {len(state.terminals[worst])} terminal values so far "
        f"(suspected infinite support)"
    )
