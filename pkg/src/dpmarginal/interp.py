"""Continuation-based interpreter in factored-coroutine form.

``interpret`` and ``resume`` run the program deterministically until it
either finishes (``Terminal``), reaches an elementary random primitive
(``RandomChoice``) or applies a non-primitive procedure (``Subcall``).  The
caller decides what to do with each partial result; the interpreter never
samples.

Continuations are ordinary Python callables ``value id -> step``.  They close
over immutable state only, so any continuation may be resumed any number of
times with different values.
"""

from fractions import Fraction
from typing import NamedTuple

from . import syntax as S
from .errors import ProgramRuntimeError, StepBudgetExceeded

DEFAULT_STEP_BUDGET = 10**6


class InterpreterArg(NamedTuple):
    """A subproblem: expression id plus interned, relevance-restricted environment."""

    expr: int
    env: int


class Terminal:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __repr__(self):
        return f"Terminal({S.to_text(self.value)})"


class RandomChoice:
    __slots__ = ("k", "values", "probs")

    def __init__(self, k, values, probs):
        self.k = k
        self.values = values
        self.probs = probs

    def __repr__(self):
        pairs = ", ".join(f"{S.to_text(v)}:{p}" for v, p in zip(self.values, self.probs))
        return f"RandomChoice({pairs})"


class Subcall:
    __slots__ = ("k", "arg")

    def __init__(self, k, arg):
        self.k = k
        self.arg = arg

    def __repr__(self):
        return f"Subcall({S.expr_text(self.arg.expr)}, env={self.arg.env})"


_RESULTS = (Terminal, RandomChoice, Subcall)


def _drive(step, budget):
    n = 0
    while True:
        r = step()
        if r.__class__ in _RESULTS:
            return r
        n += 1
        if n > budget:
            raise StepBudgetExceeded(f"more than {budget} deterministic reductions without a yield")
        step = r


def interpret(arg, step_budget=DEFAULT_STEP_BUDGET):
    env = S.env_bindings(arg.env)
    return _drive(lambda: _eval(arg.expr, env, Terminal), step_budget)


def resume(k, v, step_budget=DEFAULT_STEP_BUDGET):
    return _drive(lambda: k(v), step_budget)


# ------------------------------------------------------------- evaluation

def _lookup(x, env):
    v = env.get(x.name)
    if v is None:
        v = PRIMITIVE_VALUES.get(x.name)
        if v is None:
            raise ProgramRuntimeError(f"unbound variable {x.name.strip()!r}", x.span)
    return v


def _make_closure(x, env):
    return S.closure(x.id, S.intern_env(S.restrict(env, S.free_variables(x.id))))


def _simple(x):
    return x.kind in _SIMPLE


_SIMPLE = frozenset([S.CONSTANT, S.QUOTE, S.VARIABLE, S.LAMBDA])


def _value_of(x, env):
    kind = x.kind
    if kind == S.VARIABLE:
        return _lookup(x, env)
    if kind == S.LAMBDA:
        return _make_closure(x, env)
    return x.value


def _eval(eid, env, k):
    x = S.EXPRS[eid]
    kind = x.kind
    if kind in _SIMPLE:
        return k(_value_of(x, env))
    if kind == S.APPLICATION:
        return lambda: _eval_app(x, env, k)
    if kind == S.IF:
        then, alt = x.children[1], x.children[2]
        return lambda: _eval(x.children[0], env, lambda v: _eval(alt if v == S.FALSE else then, env, k))
    if kind == S.BODY:
        return lambda: _eval_body(x, env, k)
    raise ProgramRuntimeError(f"cannot evaluate {kind} form here", x.span)


def _eval_app(x, env, k):
    children = [S.EXPRS[c] for c in x.children]
    n = len(children)

    def loop(i, vals):
        while i < n and children[i].kind in _SIMPLE:
            vals = vals + (_value_of(children[i], env),)
            i += 1
        if i == n:
            return apply_procedure(vals[0], vals[1:], k, x.span)
        return _eval(children[i].id, env, lambda v: loop(i + 1, vals + (v,)))

    return loop(0, ())


def _eval_body(x, env, k):
    info = S.body_info(x.id)
    local = {n: v for n, v in env.items() if n not in info.define_names}
    items = [S.EXPRS[c] for c in x.children]
    last = len(items) - 1

    def run(i, local):
        while True:
            item = items[i]
            if item.kind != S.DEFINE:
                break
            if item.name not in info.lambda_defs:
                name = item.name
                return _eval(item.children[0], local, lambda v: run(i + 1, {**local, name: v}))
            local = {**local, item.name: _procedure_value(x.id, info, item.name, local, {})}
            i += 1
        if i == last:
            return _eval(item.id, local, k)
        return _eval(item.id, local, lambda _v: run(i + 1, local))

    return run(0, local)


def _procedure_value(body_id, info, name, local, memo):
    """Value of a procedure definition, built from the bindings visible so far.

    Procedures defined later in the same body are built on demand; other
    not-yet-defined names stay unbound in the captured environment.
    """
    if name in memo:
        return memo[name]
    scc = info.scc_of[name]
    captured = {}
    for n in scc.external:
        if n in local:
            captured[n] = local[n]
        elif n in info.lambda_defs:
            captured[n] = _procedure_value(body_id, info, n, local, memo)
    env_id = S.intern_env(captured)
    if scc.recursive:
        for m in scc.members:
            memo[m] = S.intern(("rec", body_id, m, env_id))
    else:
        memo[name] = S.closure(info.lambda_defs[name], env_id)
    return memo[name]


def procedure_entry(f):
    """(lambda expr, bindings) for a closure or letrec-bound procedure value."""
    key = S.VALUES[f]
    if key[0] == "closure":
        return S.EXPRS[key[1]], S.env_bindings(key[2])
    body_id, name, env_id = key[1], key[2], key[3]
    info = S.body_info(body_id)
    bindings = dict(S.env_bindings(env_id))
    for m in info.scc_of[name].members:
        bindings[m] = S.intern(("rec", body_id, m, env_id))
    return S.EXPRS[info.lambda_defs[name]], bindings


def apply_procedure(f, args, k, span=None):
    """Apply value ``f`` to argument ids; the step after which ``k`` continues."""
    key = S.VALUES[f]
    tag = key[0]
    if tag == "prim":
        name = key[1]
        if name in ERPS:
            values, probs = erp_support(name, args, span)
            return RandomChoice(k, values, probs)
        hof = _HIGHER_ORDER.get(name)
        if hof is not None:
            return hof(args, k, span)
        return k(PRIMITIVES[name](args, span))
    if tag == "closure" or tag == "rec":
        lam, bindings = procedure_entry(f)
        if len(args) != len(lam.params):
            raise ProgramRuntimeError(
                f"procedure expects {len(lam.params)} argument(s), got {len(args)}", span
            )
        body = lam.children[0]
        env = {}
        fv = S.free_variables(body)
        for n in fv:
            if n in bindings:
                env[n] = bindings[n]
        for p, a in zip(lam.params, args):
            if p in fv:
                env[p] = a
            else:
                env.pop(p, None)
        return Subcall(k, InterpreterArg(body, S.intern_env(env)))
    raise ProgramRuntimeError(f"cannot apply non-procedure {S.to_text(f)}", span)


# ------------------------------------------------------------- primitives

def _fail(message, span):
    raise ProgramRuntimeError(message, span)


def _num(v, span, who):
    key = S.VALUES[v]
    if key[0] != "num":
        _fail(f"{who}: expected a number, got {S.to_text(v)}", span)
    return key[1]


def _items(v, span, who):
    items = S.list_items(v)
    if items is None:
        _fail(f"{who}: expected a list, got {S.to_text(v)}", span)
    return items


def _arity(args, n, span, who):
    if len(args) != n:
        _fail(f"{who}: expected {n} argument(s), got {len(args)}", span)


def erp_support(name, args, span=None):
    """Support and probabilities of an elementary random primitive.

    Zero-probability outcomes are dropped and duplicate outcomes merged, so
    the returned values are pairwise distinct and the probabilities (exact
    rationals) sum to one.
    """
    if name == "flip":
        if len(args) > 1:
            _fail("flip: expected at most one argument", span)
        p = _num(args[0], span, "flip") if args else Fraction(1, 2)
        if not 0 <= p <= 1:
            _fail(f"flip: probability {p} outside [0, 1]", span)
        pairs = [(S.TRUE, p), (S.FALSE, 1 - p)]
    elif name == "uniform-draw":
        _arity(args, 1, span, name)
        items = _items(args[0], span, name)
        if not items:
            _fail("uniform-draw: empty list", span)
        pairs = [(v, Fraction(1, len(items))) for v in items]
    elif name == "multinomial":
        _arity(args, 2, span, name)
        vs = _items(args[0], span, name)
        ws = [_num(w, span, name) for w in _items(args[1], span, name)]
        if not vs or len(vs) != len(ws):
            _fail("multinomial: values and weights must be non-empty and equally long", span)
        if any(w < 0 for w in ws):
            _fail("multinomial: negative weight", span)
        total = sum(ws)
        if total == 0:
            _fail("multinomial: weights sum to zero", span)
        pairs = [(v, w / total) for v, w in zip(vs, ws)]
    else:
        _fail(f"{name} is not a random primitive", span)
    merged = {}
    for v, p in pairs:
        if p:
            merged[v] = merged.get(v, 0) + p
    return tuple(merged), tuple(merged.values())


ERPS = frozenset(["flip", "uniform-draw", "multinomial"])


def _arith(op, unit):
    def f(args, span):
        nums = [_num(a, span, op) for a in args]
        if op == "-" and len(nums) == 1:
            return S.number(-nums[0])
        if op == "/" and len(nums) == 1:
            nums = [Fraction(1)] + nums
        if not nums:
            return S.number(unit)
        acc = nums[0]
        for q in nums[1:]:
            if op == "+":
                acc += q
            elif op == "-":
                acc -= q
            elif op == "*":
                acc *= q
            else:
                if q == 0:
                    _fail("/: division by zero", span)
                acc /= q
        return S.number(acc)

    if op in "-/":
        def checked(args, span):
            if not args:
                _fail(f"{op}: expected at least one argument", span)
            return f(args, span)
        return checked
    return f


def _compare(op, test):
    def f(args, span):
        if len(args) < 2:
            _fail(f"{op}: expected at least two arguments", span)
        nums = [_num(a, span, op) for a in args]
        return S.boolean(all(test(a, b) for a, b in zip(nums, nums[1:])))
    return f


def _p_not(args, span):
    _arity(args, 1, span, "not")
    return S.boolean(args[0] == S.FALSE)


def _p_eq(args, span):
    # interned ids: identity is structural equality
    _arity(args, 2, span, "equal?")
    return S.boolean(args[0] == args[1])


def _p_car(args, span):
    _arity(args, 1, span, "car")
    key = S.VALUES[args[0]]
    if key[0] != "pair":
        _fail(f"car: expected a pair, got {S.to_text(args[0])}", span)
    return key[1]


def _p_cdr(args, span):
    _arity(args, 1, span, "cdr")
    key = S.VALUES[args[0]]
    if key[0] != "pair":
        _fail(f"cdr: expected a pair, got {S.to_text(args[0])}", span)
    return key[2]


def _p_cons(args, span):
    _arity(args, 2, span, "cons")
    return S.cons(args[0], args[1])


def _p_list(args, span):
    return S.make_list(args)


def _p_list_ref(args, span):
    _arity(args, 2, span, "list-ref")
    items = _items(args[0], span, "list-ref")
    i = _num(args[1], span, "list-ref")
    if i.denominator != 1 or not 0 <= i < len(items):
        _fail(f"list-ref: index {i} out of range", span)
    return items[int(i)]


def _p_sum(args, span):
    _arity(args, 1, span, "sum")
    return S.number(sum((_num(v, span, "sum") for v in _items(args[0], span, "sum")), Fraction(0)))


def _p_null(args, span):
    _arity(args, 1, span, "null?")
    return S.boolean(args[0] == S.NIL)


def _p_pair(args, span):
    _arity(args, 1, span, "pair?")
    return S.boolean(S.VALUES[args[0]][0] == "pair")


def _p_length(args, span):
    _arity(args, 1, span, "length")
    return S.number(len(_items(args[0], span, "length")))


def _p_append(args, span):
    out = []
    for a in args:
        out.extend(_items(a, span, "append"))
    return S.make_list(out)


PRIMITIVES = {
    "not": _p_not,
    "eq?": _p_eq,
    "equal?": _p_eq,
    "=": _compare("=", lambda a, b: a == b),
    "<": _compare("<", lambda a, b: a < b),
    ">": _compare(">", lambda a, b: a > b),
    "<=": _compare("<=", lambda a, b: a <= b),
    ">=": _compare(">=", lambda a, b: a >= b),
    "+": _arith("+", 0),
    "-": _arith("-", 0),
    "*": _arith("*", 1),
    "/": _arith("/", 1),
    "list": _p_list,
    "list-ref": _p_list_ref,
    "sum": _p_sum,
    "null?": _p_null,
    "pair?": _p_pair,
    "length": _p_length,
    "append": _p_append,
    "car": _p_car,
    "cdr": _p_cdr,
    "cons": _p_cons,
    S.HIDDEN_CAR: _p_car,
    S.HIDDEN_CDR: _p_cdr,
    S.HIDDEN_CONS: _p_cons,
}


def _hof_map(args, k, span):
    if len(args) < 2:
        _fail("map: expected a procedure and at least one list", span)
    f = args[0]
    lists = [_items(a, span, "map") for a in args[1:]]
    n = len(lists[0])
    if any(len(xs) != n for xs in lists):
        _fail("map: lists differ in length", span)

    def loop(i, acc):
        if i == n:
            return k(S.make_list(acc))
        return apply_procedure(f, tuple(xs[i] for xs in lists), lambda v: lambda: loop(i + 1, acc + (v,)), span)

    return loop(0, ())


def _hof_repeat(args, k, span):
    _arity(args, 2, span, "repeat")
    n = _num(args[0], span, "repeat")
    if n.denominator != 1 or n < 0:
        _fail(f"repeat: count must be a natural number, got {n}", span)
    n = int(n)
    f = args[1]

    def loop(i, acc):
        if i == n:
            return k(S.make_list(acc))
        return apply_procedure(f, (), lambda v: lambda: loop(i + 1, acc + (v,)), span)

    return loop(0, ())


_HIGHER_ORDER = {"map": _hof_map, "repeat": _hof_repeat}

PRIMITIVE_VALUES = {name: S.primitive(name) for name in list(PRIMITIVES) + sorted(ERPS) + list(_HIGHER_ORDER)}
