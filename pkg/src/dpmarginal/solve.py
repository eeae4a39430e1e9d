"""Equation extraction and SCC-ordered solving.

Each (root, terminal value) pair gets a variable ``m[r, v]``: the probability
that subproblem ``r`` returns ``v``.  Its right-hand side is a polynomial with
nonnegative coefficients in other such variables, so the system is monotone
and iteration from zero climbs to its least solution.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import syntax as S
from ._graph import tarjan
from .errors import BudgetExceeded, NoConvergence, ZeroMass
from .fspn import INDICATOR, PRODUCT, REF

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6
DEFAULT_MONOMIAL_BUDGET = 10**6

# A polynomial is a dict: monomial (sorted tuple of variable indices, with
# repetition for powers) -> coefficient.  () is the constant monomial.


def poly_add(acc, p, scale=1.0):
    for m, c in p.items():
        acc[m] = acc.get(m, 0.0) + scale * c
    return acc


def poly_mul(p, q):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(sorted(m1 + m2)) if m1 and m2 else m1 or m2
            out[m] = out.get(m, 0.0) + c1 * c2
    return out


def poly_eval(p, x):
    s = 0.0
    for m, c in p.items():
        t = c
        for i in m:
            t *= x[i]
        s += t
    return s


@dataclass
class EquationSystem:
    variables: list            # (root, value id) per variable index
    rhs: list                  # polynomial per variable
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {v: i for i, v in enumerate(self.variables)}

    def __len__(self):
        return len(self.variables)

    def dependencies(self, i):
        seen = {}
        for m in self.rhs[i]:
            for j in m:
                seen[j] = None
        return list(seen)

    def num_monomials(self):
        return sum(len(p) for p in self.rhs)

    def describe(self, i):
        r, v = self.variables[i]
        return f"m[r{r},{S.to_text(v)}]"

    def to_text(self):
        lines = []
        for i, p in enumerate(self.rhs):
            terms = []
            for m, c in p.items():
                terms.append("·".join([format(c, ".6g")] + [self.describe(j) for j in m]))
            lines.append(f"{self.describe(i)} = {' + '.join(terms) or '0'}")
        return "\n".join(lines)


def extract_equations(g, terminals, monomial_budget=DEFAULT_MONOMIAL_BUDGET):
    """One polynomial equation per (root, terminal value).

    A node's value is kept as ``{key: poly}`` where key ``None`` is the part
    that does not depend on the selected value (refs) and key ``v`` the part
    present only when ``v`` is selected (indicators).
    """
    variables = [(r, v) for r in sorted(terminals) for v in terminals[r]]
    index = {var: i for i, var in enumerate(variables)}
    rhs = [None] * len(variables)
    total = 0
    for r in sorted(terminals):
        if not terminals[r]:
            continue
        values = _node_values(g, r, index)
        root_val = values[r]
        indep = root_val.get(None, {})
        for v in terminals[r]:
            p = poly_add(dict(indep), root_val.get(v, {}))
            p = {m: c for m, c in p.items() if c != 0.0}
            rhs[index[(r, v)]] = p
            total += len(p)
            if total > monomial_budget:
                raise BudgetExceeded(f"equation size budget of {monomial_budget} monomials exceeded")
    return EquationSystem(variables, rhs, index)


def _node_values(g, root, index):
    vals = {}
    stack = [(root, False)]
    kind, children, weights = g.kind, g.children, g.weights
    while stack:
        n, ready = stack.pop()
        k = kind[n]
        if k == INDICATOR:
            vals[n] = {g.value[n]: {(): 1.0}}
            continue
        if k == REF:
            vals[n] = {None: {(index[(g.target[n], g.value[n])],): 1.0}}
            continue
        if not ready:
            stack.append((n, True))
            stack.extend((c, False) for c in children[n] if c not in vals)
            continue
        if k == PRODUCT:
            acc = {None: {(): 1.0}}
            for c in children[n]:
                acc = _sel_mul(acc, vals[c])
        else:
            acc = {}
            for c, w in zip(children[n], weights[n]):
                for key, p in vals[c].items():
                    poly_add(acc.setdefault(key, {}), p, w)
        vals[n] = acc
        for c in children[n]:
            # each node has one parent; children are no longer needed
            vals.pop(c, None)
    return vals


def _sel_mul(a, b):
    out = {}
    for ka, pa in a.items():
        for kb, pb in b.items():
            if ka is None:
                key = kb
            elif kb is None or kb == ka:
                key = ka
            else:
                continue
            poly_add(out.setdefault(key, {}), poly_mul(pa, pb))
    return out


def scc_decompose(system):
    """Components in solving order: each after every component it references."""
    comps = tarjan(range(len(system)), system.dependencies)
    return [sorted(c) for c in comps]


@dataclass
class ComponentResult:
    variables: list
    values: list
    method: str
    iterations: int
    residual: float
    converged: bool = True
    monotone: bool = True

    def to_json(self, system=None):
        d = {
            "size": len(self.variables),
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }
        if system is not None:
            d["variables"] = [system.describe(i) for i in self.variables]
        return d


def _localize(comp, system, solved):
    """Substitute solved outside variables; returns per-variable term lists
    ``[(coef, local_indices)]`` over the component's own variables."""
    local = {v: i for i, v in enumerate(comp)}
    out = []
    for v in comp:
        acc = {}
        for m, c in system.rhs[v].items():
            own = []
            for j in m:
                li = local.get(j)
                if li is None:
                    c *= solved[j]
                else:
                    own.append(li)
            if c != 0.0:
                key = tuple(own)
                acc[key] = acc.get(key, 0.0) + c
        out.append([(c, m) for m, c in acc.items()])
    return out


def _F(terms, x):
    out = []
    for row in terms:
        s = 0.0
        for c, m in row:
            t = c
            for i in m:
                t *= x[i]
            s += t
        out.append(s)
    return out


def fixed_point(terms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Jacobi iteration x <- F(x) from zero.

    Returns (x, iterations, residual, converged, monotone).  Stops when the
    max-norm change drops below ``tol``.
    """
    x = [0.0] * len(terms)
    monotone = True
    for it in range(1, max_iter + 1):
        nx = _F(terms, x)
        change = 0.0
        for a, b in zip(x, nx):
            d = b - a
            if d < 0.0:
                monotone = False
            if abs(d) > change:
                change = abs(d)
        x = nx
        if not math.isfinite(change):
            return x, it, math.inf, False, monotone
        if change < tol:
            res = _residual(terms, x)
            return x, it, res, res <= tol, monotone
    return x, max_iter, _residual(terms, x), False, monotone


def _residual(terms, x):
    fx = _F(terms, x)
    return max((abs(a - b) for a, b in zip(fx, x)), default=0.0)


def _jacobian(terms, x):
    n = len(terms)
    J = np.zeros((n, n))
    for i, row in enumerate(terms):
        for c, m in row:
            for p, j in enumerate(m):
                t = c
                for q, f in enumerate(m):
                    if q != p:
                        t *= x[f]
                J[i, j] += t
    return J


def newton(terms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Newton's method on x - F(x) = 0 from zero.

    Returns (x, iterations, residual, converged, status); ``status`` is
    ``None`` normally and ``'singular'`` when (I - J) stays singular after
    one diagonal perturbation.
    """
    n = len(terms)
    x = np.zeros(n)
    eye = np.eye(n)
    for it in range(1, max_iter + 1):
        fx = np.array(_F(terms, list(x)))
        A = eye - _jacobian(terms, list(x))
        rhs = fx - x
        try:
            step = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            try:
                step = np.linalg.solve(A + 1e-12 * eye, rhs)
            except np.linalg.LinAlgError:
                return list(x), it, math.inf, False, "singular"
        if not np.all(np.isfinite(step)):
            return list(x), it, math.inf, False, "singular"
        x = x + step
        if np.max(np.abs(step), initial=0.0) < tol:
            xs = [float(v) for v in x]
            res = _residual(terms, xs)
            return xs, it, res, res <= tol, None
    xs = [float(v) for v in x]
    return xs, max_iter, _residual(terms, xs), False, None


def _direct(row):
    """Solve x = a + b·x (a single variable, at most linear in itself).

    Returns None when the equation is nonlinear in x.
    """
    a = b = 0.0
    for c, m in row:
        if not m:
            a += c
        elif len(m) == 1:
            b += c
        else:
            return None
    if b < 1.0:
        return a / (1.0 - b)
    return 0.0 if a == 0.0 else math.inf


def solve_component(comp, system, solved, method="fixpoint", tol=DEFAULT_TOL,
                    max_iter=DEFAULT_MAX_ITER, simplify=True):
    """Solve one strongly connected component given all variables it needs.

    ``solved`` maps every referenced outside variable to its value.  Raises
    :class:`NoConvergence` (with the partial result attached as ``report``).
    """
    terms = _localize(comp, system, solved)
    self_ref = any(m for row in terms for _, m in row)
    if not self_ref:
        values = [sum(c for c, _ in row) for row in terms]
        return ComponentResult(list(comp), values, "direct", 0, 0.0)
    if simplify and len(comp) == 1:
        x = _direct(terms[0])
        if x is not None:
            if math.isfinite(x):
                res = _residual(terms, [x])
                return ComponentResult(list(comp), [x], "direct", 0, res)
            result = ComponentResult(list(comp), [x], "direct", 0, math.inf, converged=False)
            raise NoConvergence(
                f"{system.describe(comp[0])} has no finite least solution", math.inf, 0, result
            )
    if method == "newton":
        x, it, res, ok, status = newton(terms, tol, max_iter)
        if status == "singular":
            x, it2, res, ok, mono = fixed_point(terms, tol, max_iter)
            result = ComponentResult(list(comp), x, "fixpoint", it + it2, res, ok, mono)
        else:
            result = ComponentResult(list(comp), x, "newton", it, res, ok)
    elif method == "fixpoint":
        x, it, res, ok, mono = fixed_point(terms, tol, max_iter)
        result = ComponentResult(list(comp), x, "fixpoint", it, res, ok, mono)
    else:
        raise ValueError(f"unknown solver {method!r}")
    if not result.converged:
        raise NoConvergence(
            f"component of {len(comp)} variable(s) starting at {system.describe(comp[0])} "
            f"did not converge (residual {res:.3g} after {result.iterations} iterations)",
            res, result.iterations, result,
        )
    return result


@dataclass
class SolveReport:
    assignment: dict                      # variable index -> probability
    components: list                      # ComponentResult in solving order
    system: EquationSystem = None
    timings: dict = field(default_factory=dict)

    def value(self, root, v):
        return self.assignment[self.system.index[(root, v)]]

    def to_json(self, detail=False):
        sizes = [len(c.variables) for c in self.components]
        methods = {}
        for c in self.components:
            methods[c.method] = methods.get(c.method, 0) + 1
        return {
            "variables": len(self.system) if self.system is not None else len(self.assignment),
            "sccCount": len(self.components),
            "sccSizes": sizes,
            "largestScc": max(sizes, default=0),
            "methods": methods,
            "maxResidual": max((c.residual for c in self.components), default=0.0),
            "components": [
                c.to_json(self.system if detail else None)
                for c in self.components
                if detail or c.method != "direct" or len(c.variables) > 1
            ],
        }


@dataclass
class Distribution:
    mass: dict                # value id -> probability
    total_mass: float

    def __getitem__(self, v):
        return self.mass.get(v, 0.0)

    def items(self):
        """(value id, probability), by descending probability then value text."""
        return sorted(self.mass.items(), key=lambda kv: (-kv[1], S.to_text(kv[0])))

    def by_text(self):
        return {S.to_text(v): p for v, p in self.mass.items()}

    def to_json(self):
        return [{"value": S.to_text(v), "prob": p} for v, p in self.items()]


def solve_system(system, method="fixpoint", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, simplify=True):
    assignment = {}
    results = []
    for comp in scc_decompose(system):
        try:
            res = solve_component(comp, system, assignment, method, tol, max_iter, simplify)
        except NoConvergence as e:
            results.append(e.report)
            e.report = SolveReport(assignment, results, system)
            raise
        results.append(res)
        for v, x in zip(comp, res.values):
            assignment[v] = x
    return SolveReport(assignment, results, system)


def marginal(g, state, method="fixpoint", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
             normalize=False, simplify=True, monomial_budget=DEFAULT_MONOMIAL_BUDGET):
    """Marginal distribution over the program's return values."""
    t0 = time.perf_counter()
    system = extract_equations(g, state.terminals, monomial_budget)
    t1 = time.perf_counter()
    report = solve_system(system, method, tol, max_iter, simplify)
    t2 = time.perf_counter()
    report.timings = {"extract": t1 - t0, "solve": t2 - t1}
    r = g.global_root
    mass = {}
    for v in state.terminals[r]:
        mass[v] = max(report.value(r, v), 0.0)
    total = sum(mass.values())
    if normalize:
        if total < tol:
            raise ZeroMass(f"total mass {total:.3g} is zero: the condition never holds")
        mass = {v: p / total for v, p in mass.items()}
    return Distribution(mass, total), report
