"""Reader and hash-consed program representation.

Values, environments and expressions all live in append-only intern tables
and are referred to by small integers.  Two ids are equal exactly when the
structures they denote are equal, so subproblem identification during
compilation is a tuple-of-ints lookup.

Value keys::

    ('bool', b)  ('num', Fraction)  ('sym', name)  ('str', text)  ('nil',)
    ('pair', car_id, cdr_id)
    ('closure', lambda_expr_id, env_id)
    ('rec', body_expr_id, define_name, env_id)   # letrec-bound procedure
    ('prim', name)
"""

import re
import threading
from fractions import Fraction

from ._graph import tarjan
from .errors import ProgramSyntaxError


class InternTable:
    """Append-only hash-cons table: structural key <-> dense integer id."""

    def __init__(self):
        self._ids = {}
        self._keys = []
        self._lock = threading.Lock()

    def intern(self, key):
        i = self._ids.get(key)
        if i is None:
            with self._lock:
                i = self._ids.get(key)
                if i is None:
                    i = len(self._keys)
                    self._keys.append(key)
                    self._ids[key] = i
        return i

    def lookup(self, key):
        return self._ids.get(key)

    def __getitem__(self, i):
        return self._keys[i]

    def __len__(self):
        return len(self._keys)


VALUES = InternTable()
ENVS = InternTable()
_env_dicts = []
_env_lock = threading.Lock()


# ---------------------------------------------------------------- values

def intern(key):
    """Intern a structural value key whose components are already ids."""
    return VALUES.intern(key)


def structure(vid):
    return VALUES[vid]


def boolean(b):
    return VALUES.intern(("bool", bool(b)))


def number(q):
    return VALUES.intern(("num", Fraction(q)))


def symbol(name):
    return VALUES.intern(("sym", name))


def string(text):
    return VALUES.intern(("str", text))


def cons(a, d):
    return VALUES.intern(("pair", a, d))


def primitive(name):
    return VALUES.intern(("prim", name))


def closure(lambda_id, env_id):
    return VALUES.intern(("closure", lambda_id, env_id))


TRUE = boolean(True)
FALSE = boolean(False)
NIL = VALUES.intern(("nil",))


def make_list(items):
    out = NIL
    for v in reversed(items):
        out = cons(v, out)
    return out


def list_items(vid):
    """Elements of a proper list as a tuple, or None if ``vid`` is not one."""
    out = []
    key = VALUES[vid]
    while key[0] == "pair":
        out.append(key[1])
        key = VALUES[key[2]]
    if key[0] != "nil":
        return None
    return tuple(out)


def to_text(vid):
    """Canonical s-expression text for a value."""
    key = VALUES[vid]
    tag = key[0]
    if tag == "bool":
        return "#t" if key[1] else "#f"
    if tag == "num":
        q = key[1]
        return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
    if tag == "sym":
        return key[1]
    if tag == "str":
        return '"' + key[1].replace("\\", "\\\\").replace('"', '\\"') + '"'
    if tag == "nil":
        return "()"
    if tag == "pair":
        parts = []
        while key[0] == "pair":
            parts.append(to_text(key[1]))
            key = VALUES[key[2]]
        if key[0] != "nil":
            parts.append(".")
            parts.append(to_text(VALUES.lookup(key)))
        return "(" + " ".join(parts) + ")"
    if tag == "prim":
        return f"#<primitive {key[1].strip()}>"
    if tag == "closure":
        lam = EXPRS[key[1]]
        where = lam.span[0] if lam.span else "?"
        return f"#<procedure ({' '.join(lam.params)})@{where}>"
    if tag == "rec":
        return f"#<procedure {key[2].strip()}>"
    raise ValueError(f"unknown value tag {tag!r}")


# ----------------------------------------------------------- environments

def intern_env(bindings):
    """Intern a mapping ``name -> value id``; equal maps share one id."""
    key = tuple(sorted(bindings.items()))
    eid = ENVS.intern(key)
    if eid >= len(_env_dicts):
        with _env_lock:
            while len(_env_dicts) <= eid:
                _env_dicts.append(dict(ENVS[len(_env_dicts)]))
    return eid


def env_bindings(env_id):
    """The bindings of an interned environment.  Callers must not mutate it."""
    return _env_dicts[env_id]


EMPTY_ENV = intern_env({})


def restrict(bindings, names):
    """Keep only the bindings for ``names`` that are actually bound."""
    return {n: bindings[n] for n in names if n in bindings}


# ------------------------------------------------------------ expressions

CONSTANT = "constant"
VARIABLE = "variable-reference"
LAMBDA = "lambda"
APPLICATION = "application"
IF = "if"
BODY = "define-sequence"
QUOTE = "quote"
DEFINE = "define"


class Expr:
    """An interned expression node.

    ``value`` holds the constant/quoted value id, ``name`` the variable or
    defined name, ``params`` the lambda parameters and ``children`` the
    subexpression ids (lambda: ``(body,)``; define: ``(rhs,)``; body: its
    items in order).
    """

    __slots__ = ("id", "kind", "value", "name", "params", "children", "span", "_fv", "_info")

    def __init__(self, kind, value=None, name=None, params=(), children=(), span=None):
        self.id = None
        self.kind = kind
        self.value = value
        self.name = name
        self.params = params
        self.children = children
        self.span = span
        self._fv = None
        self._info = None

    def key(self):
        return (self.kind, self.value, self.name, self.params, self.children)

    def __repr__(self):
        return f"Expr({self.id}, {self.kind})"


class _ExprTable:
    def __init__(self):
        self._ids = {}
        self._nodes = []
        self._lock = threading.Lock()

    def add(self, node):
        key = node.key()
        i = self._ids.get(key)
        if i is None:
            with self._lock:
                i = self._ids.get(key)
                if i is None:
                    i = node.id = len(self._nodes)
                    self._nodes.append(node)
                    self._ids[key] = i
        return i

    def __getitem__(self, i):
        return self._nodes[i]

    def __len__(self):
        return len(self._nodes)


EXPRS = _ExprTable()


def mk_const(vid, span=None):
    return EXPRS.add(Expr(CONSTANT, value=vid, span=span))


def mk_quote(vid, span=None):
    return EXPRS.add(Expr(QUOTE, value=vid, span=span))


def mk_var(name, span=None):
    return EXPRS.add(Expr(VARIABLE, name=name, span=span))


def mk_lambda(params, body, span=None):
    return EXPRS.add(Expr(LAMBDA, params=tuple(params), children=(body,), span=span))


def mk_app(children, span=None):
    return EXPRS.add(Expr(APPLICATION, children=tuple(children), span=span))


def mk_if(test, then, alt, span=None):
    return EXPRS.add(Expr(IF, children=(test, then, alt), span=span))


def mk_define(name, rhs, span=None):
    return EXPRS.add(Expr(DEFINE, name=name, children=(rhs,), span=span))


def mk_body(items, span=None):
    return EXPRS.add(Expr(BODY, children=tuple(items), span=span))


def free_variables(eid):
    """Free variables of an expression, memoized per id."""
    node = EXPRS[eid]
    if node._fv is not None:
        return node._fv
    # post-order without recursion; expressions can nest deeply
    stack = [(eid, False)]
    while stack:
        i, ready = stack.pop()
        x = EXPRS[i]
        if x._fv is not None:
            continue
        if not ready:
            stack.append((i, True))
            stack.extend((c, False) for c in x.children if EXPRS[c]._fv is None)
            continue
        kind = x.kind
        if kind == VARIABLE:
            fv = frozenset((x.name,))
        elif kind in (CONSTANT, QUOTE):
            fv = frozenset()
        else:
            fv = frozenset().union(*(EXPRS[c]._fv for c in x.children))
            if kind == LAMBDA:
                fv = fv - frozenset(x.params)
            elif kind == BODY:
                fv = fv - frozenset(EXPRS[c].name for c in x.children if EXPRS[c].kind == DEFINE)
        x._fv = fv
    return node._fv


class _SccInfo:
    __slots__ = ("members", "recursive", "external")

    def __init__(self, members, recursive, external):
        self.members = members
        self.recursive = recursive
        self.external = external


class BodyInfo:
    """Static facts about a define-sequence used by the interpreter.

    Procedure definitions (``define`` with a lambda right-hand side) are
    grouped into strongly connected components of their mutual references.
    A recursive component is represented at run time by ``rec`` values that
    share one environment holding the component's external free variables.
    """

    __slots__ = ("define_names", "lambda_defs", "scc_of")

    def __init__(self, body_id):
        items = [EXPRS[c] for c in EXPRS[body_id].children]
        defines = [x for x in items if x.kind == DEFINE]
        self.define_names = frozenset(x.name for x in defines)
        self.lambda_defs = {
            x.name: x.children[0] for x in defines if EXPRS[x.children[0]].kind == LAMBDA
        }
        order = [x.name for x in defines if x.name in self.lambda_defs]
        deps = {n: sorted(free_variables(self.lambda_defs[n]) & self.lambda_defs.keys()) for n in order}
        self.scc_of = {}
        for comp in tarjan(order, deps.__getitem__):
            members = tuple(sorted(comp, key=order.index))
            recursive = len(comp) > 1 or comp[0] in deps[comp[0]]
            fv = frozenset().union(*(free_variables(self.lambda_defs[m]) for m in members))
            info = _SccInfo(members, recursive, tuple(sorted(fv - frozenset(members))))
            for m in members:
                self.scc_of[m] = info


def body_info(body_id):
    node = EXPRS[body_id]
    if node._info is None:
        node._info = BodyInfo(body_id)
    return node._info


# ----------------------------------------------------------------- reader

class Datum:
    __slots__ = ("kind", "value", "start", "end")

    def __init__(self, kind, value, start, end):
        self.kind = kind
        self.value = value
        self.start = start
        self.end = end

    def __repr__(self):
        return f"Datum({self.kind}, {self.value!r})"


_TOKEN = re.compile(
    r"""(?P<ws>\s+|;[^\n]*)
      |(?P<open>[(\[])
      |(?P<close>[)\]])
      |(?P<quote>')
      |(?P<string>"(?:\\.|[^"\\])*")
      |(?P<atom>[^\s()\[\]";']+)""",
    re.VERBOSE,
)
_NUMBER = re.compile(r"[+-]?(?:\d+/\d+|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\Z")
_CLOSER = {"(": ")", "[": "]"}


def line_col(text, offset):
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _err(text, offset, message):
    line, col = line_col(text, offset)
    return ProgramSyntaxError(message, line, col)


def _atom(tok, start, end):
    if tok in ("#t", "#true"):
        return Datum("boolean", True, start, end)
    if tok in ("#f", "#false"):
        return Datum("boolean", False, start, end)
    if _NUMBER.match(tok):
        return Datum("number", Fraction(tok), start, end)
    return Datum("symbol", tok, start, end)


def read(text):
    """Read every datum in ``text``."""
    out = []
    stack = []  # (opener, start, items)
    pending = []
    pos = 0
    n = len(text)

    def emit(d):
        while pending and pending[-1][0] == len(stack):
            _, qstart = pending.pop()
            d = Datum("list", [Datum("symbol", "quote", qstart, qstart + 1), d], qstart, d.end)
        if stack:
            stack[-1][2].append(d)
        else:
            out.append(d)

    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos] == '"':
                raise _err(text, pos, "unterminated string")
            raise _err(text, pos, f"unexpected character {text[pos]!r}")
        start, end = m.span()
        pos = end
        group = m.lastgroup
        if group == "ws":
            continue
        if group == "open":
            stack.append((text[start], start, []))
        elif group == "close":
            if not stack:
                raise _err(text, start, "unbalanced close paren")
            if pending and pending[-1][0] == len(stack):
                raise _err(text, start, "quote with nothing to quote")
            opener, ostart, items = stack.pop()
            if _CLOSER[opener] != text[start]:
                raise _err(text, start, f"mismatched {text[start]!r} for {opener!r}")
            emit(Datum("list", items, ostart, end))
        elif group == "quote":
            pending.append((len(stack), start))
        elif group == "string":
            body = text[start + 1 : end - 1]
            body = re.sub(r"\\(.)", lambda mm: {"n": "\n", "t": "\t"}.get(mm.group(1), mm.group(1)), body)
            emit(Datum("string", body, start, end))
        else:
            emit(_atom(m.group("atom"), start, end))
    if stack:
        raise _err(text, stack[-1][1], "unbalanced open paren")
    if pending:
        raise _err(text, pending[-1][1], "quote with nothing to quote")
    return out


# -------------------------------------------------------------- converter

# Names introduced by desugaring contain a space, which the reader never
# produces, so user code cannot capture or shadow them.
HIDDEN_CONS = " cons"
HIDDEN_CAR = " car"
HIDDEN_CDR = " cdr"
_Q_JOINT = " joint"
_Q_REJECT = " rejection"
_Q_SAMPLE = " sample"
_OR_TMP = " or"

SPECIAL_FORMS = frozenset(["define", "lambda", "λ", "if", "quote", "let", "and", "or", "query"])


class _Converter:
    def __init__(self, text):
        self.text = text

    def error(self, d, message):
        return _err(self.text, d.start, message)

    def datum_value(self, d):
        kind = d.kind
        if kind == "boolean":
            return boolean(d.value)
        if kind == "number":
            return number(d.value)
        if kind == "string":
            return string(d.value)
        if kind == "symbol":
            return symbol(d.value)
        return make_list([self.datum_value(x) for x in d.value])

    def expr(self, d):
        span = (d.start, d.end)
        if d.kind in ("boolean", "number", "string"):
            return mk_const(self.datum_value(d), span)
        if d.kind == "symbol":
            if d.value in SPECIAL_FORMS:
                raise self.error(d, f"special form {d.value!r} used as a variable")
            return mk_var(d.value, span)
        items = d.value
        if not items:
            raise self.error(d, "empty application ()")
        head = items[0]
        if head.kind == "symbol" and head.value in SPECIAL_FORMS:
            return getattr(self, "form_" + {"λ": "lambda"}.get(head.value, head.value))(d, items[1:], span)
        return mk_app([self.expr(x) for x in items], span)

    def form_define(self, d, args, span):
        raise self.error(d, "define in expression position")

    def form_quote(self, d, args, span):
        if len(args) != 1:
            raise self.error(d, "quote takes exactly one datum")
        return mk_quote(self.datum_value(args[0]), span)

    def params(self, d):
        if d.kind != "list":
            raise self.error(d, "parameter list must be a list")
        names = []
        for p in d.value:
            if p.kind != "symbol" or p.value in SPECIAL_FORMS:
                raise self.error(p, "parameter must be a symbol")
            if p.value in names:
                raise self.error(p, f"duplicate parameter {p.value!r}")
            names.append(p.value)
        return names

    def form_lambda(self, d, args, span):
        if len(args) < 2:
            raise self.error(d, "lambda needs parameters and a body")
        return mk_lambda(self.params(args[0]), self.body(d, args[1:]), span)

    def form_if(self, d, args, span):
        if len(args) != 3:
            raise self.error(d, "if takes exactly three subforms")
        return mk_if(*(self.expr(x) for x in args), span)

    def form_let(self, d, args, span):
        if len(args) < 2 or args[0].kind != "list":
            raise self.error(d, "let needs a binding list and a body")
        names, inits = [], []
        for b in args[0].value:
            if b.kind != "list" or len(b.value) != 2 or b.value[0].kind != "symbol":
                raise self.error(b, "let binding must be (name expr)")
            if b.value[0].value in names:
                raise self.error(b, f"duplicate let binding {b.value[0].value!r}")
            names.append(b.value[0].value)
            inits.append(self.expr(b.value[1]))
        lam = mk_lambda(names, self.body(d, args[1:]), span)
        return mk_app([lam] + inits, span)

    def form_and(self, d, args, span):
        if not args:
            return mk_const(TRUE, span)
        out = self.expr(args[-1])
        for a in reversed(args[:-1]):
            out = mk_if(self.expr(a), out, mk_const(FALSE), span)
        return out

    def form_or(self, d, args, span):
        if not args:
            return mk_const(FALSE, span)
        out = self.expr(args[-1])
        tmp = mk_var(_OR_TMP)
        for a in reversed(args[:-1]):
            test = mk_if(tmp, tmp, out, span)
            out = mk_body([mk_define(_OR_TMP, self.expr(a), span), test], span)
        return out

    def form_query(self, d, args, span):
        if len(args) < 2:
            raise self.error(d, "query needs a query expression and a condition")
        defs = args[:-2]
        for x in defs:
            if not self.is_define(x):
                raise self.error(x, "only definitions may precede the query expression")
        items = [self.define(x) for x in defs]
        query_e, cond_e = self.expr(args[-2]), self.expr(args[-1])
        items.append(mk_app([mk_var(HIDDEN_CONS), cond_e, query_e], span))
        joint = mk_lambda((), mk_body(items, span) if defs else items[-1], span)
        sample = mk_var(_Q_SAMPLE)
        retry = mk_if(
            mk_app([mk_var(HIDDEN_CAR), sample]),
            mk_app([mk_var(HIDDEN_CDR), sample]),
            mk_app([mk_var(_Q_REJECT)], span),
            span,
        )
        reject = mk_lambda(
            (), mk_body([mk_define(_Q_SAMPLE, mk_app([mk_var(_Q_JOINT)], span)), retry], span), span
        )
        return mk_body(
            [mk_define(_Q_JOINT, joint, span), mk_define(_Q_REJECT, reject, span), mk_app([mk_var(_Q_REJECT)], span)],
            span,
        )

    @staticmethod
    def is_define(d):
        return d.kind == "list" and d.value and d.value[0].kind == "symbol" and d.value[0].value == "define"

    def define(self, d):
        span = (d.start, d.end)
        args = d.value[1:]
        if len(args) < 2:
            raise self.error(d, "define needs a name and a value")
        target = args[0]
        if target.kind == "symbol":
            if len(args) != 2:
                raise self.error(d, "define of a variable takes exactly one value")
            if target.value in SPECIAL_FORMS:
                raise self.error(target, f"cannot redefine special form {target.value!r}")
            return mk_define(target.value, self.expr(args[1]), span)
        if target.kind == "list" and target.value and target.value[0].kind == "symbol":
            name = target.value[0].value
            if name in SPECIAL_FORMS:
                raise self.error(target, f"cannot redefine special form {name!r}")
            params = self.params(Datum("list", target.value[1:], target.start, target.end))
            lam = mk_lambda(params, self.body(d, args[1:]), span)
            return mk_define(name, lam, span)
        raise self.error(target, "malformed define")

    def body(self, d, forms, toplevel=False):
        items = []
        seen = set()
        saw_expr = False
        for f in forms:
            if self.is_define(f):
                if saw_expr and not toplevel:
                    raise self.error(f, "define in expression position")
                item = self.define(f)
                name = EXPRS[item].name
                if name in seen:
                    raise self.error(f, f"duplicate definition of {name!r}")
                seen.add(name)
                items.append(item)
            else:
                saw_expr = True
                items.append(self.expr(f))
        if not items or EXPRS[items[-1]].kind == DEFINE:
            raise self.error(d, "body must end with an expression")
        if len(items) == 1:
            return items[0]
        return mk_body(items, (d.start, d.end))


def parse(text):
    """Parse program text into its top-level form ids, in order.

    Top-level definitions come back as ``define`` forms; everything else is
    an ordinary expression.
    """
    conv = _Converter(text)
    return [conv.define(d) if conv.is_define(d) else conv.expr(d) for d in read(text)]


def parse_program(text):
    """Parse a whole program into the single expression the compiler runs."""
    forms = parse(text)
    return program_expr(forms, text)


def program_expr(forms, text=""):
    if not forms:
        raise ProgramSyntaxError("empty program")
    if EXPRS[forms[-1]].kind == DEFINE:
        line, col = line_col(text, EXPRS[forms[-1]].span[0]) if text else (None, None)
        raise ProgramSyntaxError("program must end with an expression", line, col)
    names = [EXPRS[f].name for f in forms if EXPRS[f].kind == DEFINE]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ProgramSyntaxError(f"duplicate top-level definition of {sorted(dup)[0]!r}")
    if len(forms) == 1:
        return forms[0]
    return mk_body(forms, (EXPRS[forms[0]].span[0], EXPRS[forms[-1]].span[1]))


def expr_text(eid, limit=80):
    """Short human-readable rendering of an expression, for diagnostics."""
    def go(i, depth):
        x = EXPRS[i]
        if depth > 6:
            return "..."
        k = x.kind
        if k in (CONSTANT,):
            return to_text(x.value)
        if k == QUOTE:
            return "'" + to_text(x.value)
        if k == VARIABLE:
            return x.name.strip()
        if k == LAMBDA:
            return f"(lambda ({' '.join(x.params)}) {go(x.children[0], depth + 1)})"
        if k == DEFINE:
            return f"(define {x.name.strip()} {go(x.children[0], depth + 1)})"
        if k == IF:
            return "(if " + " ".join(go(c, depth + 1) for c in x.children) + ")"
        if k == BODY:
            return "(begin " + " ".join(go(c, depth + 1) for c in x.children) + ")"
        return "(" + " ".join(go(c, depth + 1) for c in x.children) + ")"
    s = go(eid, 0)
    return s if len(s) <= limit else s[: limit - 3] + "..."
