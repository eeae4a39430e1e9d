"""Exact enumeration oracle, independent of the compiler and interpreter.

A direct-style evaluator over reader datums that returns the full
distribution of an expression as ``{value: Fraction}``.  ``query`` is handled
by enumerating the joint and renormalizing, not by rejection.  Procedure
calls are memoized on (procedure, arguments, remaining depth); a call made
with no depth left contributes no mass, so for recursive programs the
missing mass bounds the truncation error.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from dpmarginal.syntax import read


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Str:
    text: str


class Boolean:
    __slots__ = ("b",)

    def __init__(self, b):
        self.b = b

    def __repr__(self):
        return "#t" if self.b else "#f"


T, F = Boolean(True), Boolean(False)


def boolean(b):
    return T if b else F


class Closure:
    def __init__(self, params, body, frame):
        self.params = params
        self.body = body
        self.frame = frame


@dataclass(frozen=True)
class Prim:
    name: str


def text(v):
    if isinstance(v, Boolean):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, Sym):
        return v.name
    if isinstance(v, Str):
        return '"' + v.text + '"'
    if isinstance(v, tuple):
        return "(" + " ".join(text(x) for x in v) + ")"
    return repr(v)


def _num(v):
    assert isinstance(v, Fraction), v
    return v


def _truthy(v):
    return v is not F


DET = {
    "not": lambda a: boolean(a is F),
    "eq?": lambda a, b: boolean(a == b),
    "equal?": lambda a, b: boolean(a == b),
    "=": lambda a, b: boolean(_num(a) == _num(b)),
    "<": lambda a, b: boolean(_num(a) < _num(b)),
    ">": lambda a, b: boolean(_num(a) > _num(b)),
    "<=": lambda a, b: boolean(_num(a) <= _num(b)),
    ">=": lambda a, b: boolean(_num(a) >= _num(b)),
    "+": lambda *a: sum(map(_num, a), Fraction(0)),
    "*": lambda *a: _prod(a),
    "-": lambda a, *b: -_num(a) if not b else _num(a) - sum(map(_num, b), Fraction(0)),
    "/": lambda a, *b: 1 / _num(a) if not b else _num(a) / _prod(b),
    "list": lambda *a: tuple(a),
    "list-ref": lambda xs, i: xs[int(i)],
    "sum": lambda xs: sum(map(_num, xs), Fraction(0)),
    "null?": lambda xs: boolean(xs == ()),
    "length": lambda xs: Fraction(len(xs)),
    "car": lambda xs: xs[0],
    "cdr": lambda xs: xs[1:],
    "cons": lambda a, xs: (a,) + xs,
    "append": lambda *xs: sum(xs, ()),
}


def _prod(xs):
    out = Fraction(1)
    for x in xs:
        out *= _num(x)
    return out


def _erp(name, args):
    if name == "flip":
        p = args[0] if args else Fraction(1, 2)
        return {T: p, F: 1 - p}
    if name == "uniform-draw":
        (xs,) = args
        out = {}
        for x in xs:
            out[x] = out.get(x, 0) + Fraction(1, len(xs))
        return out
    if name == "multinomial":
        vs, ws = args
        total = sum(ws)
        out = {}
        for v, w in zip(vs, ws):
            out[v] = out.get(v, 0) + w / total
        return out
    raise KeyError(name)


def _add(acc, v, p):
    if p:
        acc[v] = acc.get(v, 0) + p


class Enumerator:
    def __init__(self, depth=40, exact=True):
        self.depth = depth
        self.memo = {}
        # Exact rationals blow up on nonlinear recursion; floats then suffice.
        self.one = Fraction(1) if exact else 1.0
        self.cast = Fraction if exact else float

    # expression -> {value: prob}
    def ev(self, d, env, depth):
        kind = d.kind
        if kind == "number":
            return {d.value: self.one}
        if kind == "boolean":
            return {boolean(d.value): self.one}
        if kind == "string":
            return {Str(d.value): self.one}
        if kind == "symbol":
            if d.value in env:
                return {env[d.value]: self.one}
            if d.value in DET or d.value in ("flip", "uniform-draw", "multinomial", "map", "repeat"):
                return {Prim(d.value): self.one}
            raise NameError(d.value)
        items = d.value
        head = items[0].value if items[0].kind == "symbol" else None
        if head == "quote":
            return {self.datum(items[1]): self.one}
        if head in ("lambda", "λ"):
            return {Closure([p.value for p in items[1].value], items[2:], env): self.one}
        if head == "if":
            out = {}
            for c, p in self.ev(items[1], env, depth).items():
                for v, q in self.ev(items[2] if _truthy(c) else items[3], env, depth).items():
                    _add(out, v, p * q)
            return out
        if head == "and":
            return self.short(items[1:], env, depth, stop_on=False)
        if head == "or":
            return self.short(items[1:], env, depth, stop_on=True)
        if head == "let":
            names = [b.value[0].value for b in items[1].value]
            inits = [b.value[1] for b in items[1].value]
            out = {}
            for vals, p in self.joint(inits, env, depth):
                frame = dict(env)
                frame.update(zip(names, vals))
                for v, q in self.body(items[2:], frame, depth).items():
                    _add(out, v, p * q)
            return out
        if head == "query":
            return self.query(items[1:], env, depth)
        out = {}
        for vals, p in self.joint(items, env, depth):
            for v, q in self.apply(vals[0], vals[1:], depth).items():
                _add(out, v, p * q)
        return out

    def datum(self, d):
        if d.kind == "list":
            return tuple(self.datum(x) for x in d.value)
        if d.kind == "symbol":
            return Sym(d.value)
        if d.kind == "boolean":
            return boolean(d.value)
        if d.kind == "string":
            return Str(d.value)
        return d.value

    def short(self, forms, env, depth, stop_on):
        if not forms:
            return {boolean(not stop_on): self.one}
        if len(forms) == 1:
            return self.ev(forms[0], env, depth)
        out = {}
        for v, p in self.ev(forms[0], env, depth).items():
            if _truthy(v) == stop_on:
                _add(out, v, p)
            else:
                for w, q in self.short(forms[1:], env, depth, stop_on).items():
                    _add(out, w, p * q)
        return out

    def joint(self, forms, env, depth):
        dists = [list(self.ev(f, env, depth).items()) for f in forms]
        for combo in product(*dists):
            p = self.one
            for _, q in combo:
                p *= q
            yield tuple(v for v, _ in combo), p

    def body(self, forms, env, depth):
        """Evaluate a body; returns {value: prob}."""
        return self._body(forms, dict(env), depth)

    def _body(self, forms, frame, depth):
        out = {}
        for i, f in enumerate(forms):
            if f.kind == "list" and f.value and f.value[0].kind == "symbol" and f.value[0].value == "define":
                target = f.value[1]
                if target.kind == "list":
                    frame[target.value[0].value] = Closure(
                        [p.value for p in target.value[1:]], f.value[2:], frame
                    )
                    continue
                rhs = self.ev(f.value[2], frame, depth)
                if len(rhs) == 1:
                    (v,) = rhs
                    frame[target.value] = v
                    continue
                for v, p in rhs.items():
                    branch = dict(frame)
                    branch[target.value] = v
                    for w, q in self._body(forms[i + 1 :], branch, depth).items():
                        _add(out, w, p * q)
                return out
            if i == len(forms) - 1:
                return self.ev(f, frame, depth)
            dist = self.ev(f, frame, depth)
            for _, p in dist.items():
                for w, q in self._body(forms[i + 1 :], dict(frame), depth).items():
                    _add(out, w, p * q)
            return out
        raise ValueError("body without expression")

    def query(self, forms, env, depth):
        *defs, q_expr, c_expr = forms
        pair = _PairForm(c_expr, q_expr)
        joint = self._body(list(defs) + [pair], dict(env), depth)
        accepted = {}
        for (c, v), p in joint.items():
            if _truthy(c):
                _add(accepted, v, p)
        z = sum(accepted.values())
        return {v: p / z for v, p in accepted.items()} if z else {}

    def apply(self, f, args, depth):
        if isinstance(f, Prim):
            name = f.name
            if name in DET:
                return {DET[name](*args): self.one}
            if name == "map":
                g, xs = args
                out = {}
                dists = [list(self.apply(g, (x,), depth).items()) for x in xs]
                for combo in product(*dists):
                    p = self.one
                    for _, q in combo:
                        p *= q
                    _add(out, tuple(v for v, _ in combo), p)
                return out
            if name == "repeat":
                n, g = args
                dists = [list(self.apply(g, (), depth).items())] * int(n)
                out = {}
                for combo in product(*dists):
                    p = self.one
                    for _, q in combo:
                        p *= q
                    _add(out, tuple(v for v, _ in combo), p)
                return out
            return {v: self.cast(p) for v, p in _erp(name, args).items()}
        assert isinstance(f, Closure), f
        key = (id(f), args, depth)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        if depth == 0:
            result = {}
        else:
            frame = dict(f.frame)
            frame.update(zip(f.params, args))
            result = self._body(list(f.body), frame, depth - 1)
        self.memo[key] = (f, result)  # keep f alive so id() stays unique
        return result


class _PairForm:
    """Pseudo-datum evaluating to (condition, query value) pairs."""

    kind = "pair-form"

    def __init__(self, cond, query):
        self.cond = cond
        self.query = query


_orig_ev = Enumerator.ev


def _ev(self, d, env, depth):
    if isinstance(d, _PairForm):
        out = {}
        for c, p in self.ev(d.cond, env, depth).items():
            for v, q in self.ev(d.query, env, depth).items():
                _add(out, (boolean(_truthy(c)), v), p * q)
        return out
    return _orig_ev(self, d, env, depth)


Enumerator.ev = _ev


def enumerate_program(source, depth=40, exact=True):
    """Distribution of a program as ``{value text: probability}`` plus the
    mass lost to truncation."""
    forms = read(source)
    e = Enumerator(depth, exact)
    dist = e.body(forms, {}, depth)
    out = {}
    for v, p in dist.items():
        out[text(v)] = out.get(text(v), 0) + p
    return out, 1 - sum(out.values())
