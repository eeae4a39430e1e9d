"""Factored sum-product networks.

Nodes are dense integers in creation order.  A node's value, for a chosen
return value ``selected`` of its owning root, is

* sum / root: weighted sum of the children,
* product:    product of the children,
* indicator(v): 1 if ``v == selected`` else 0,
* ref(r, v):  the probability that root ``r`` returns ``v``.

The refs make this a system of equations rather than a plain circuit; see
:mod:`dpmarginal.solve`.
"""

import json

from . import syntax as S
from .errors import DPError, MissingReference

ROOT = "root"
SUM = "sum"
PRODUCT = "product"
INDICATOR = "indicator"
REF = "ref"

_SINKS = (INDICATOR, REF)


class Fspn:
    def __init__(self):
        self.kind = []
        self.value = []     # indicator / ref value id
        self.target = []    # ref: the referenced root
        self.root_of = []
        self.children = []
        self.weights = []
        self.global_root = None

    def add_node(self, kind, value=None, target=None, owner=None):
        nid = len(self.kind)
        if kind == ROOT:
            owner = nid
            if self.global_root is None:
                self.global_root = nid
        elif kind == REF and (target is None or self.kind[target] != ROOT):
            raise DPError("ref node must point at a root node")
        self.kind.append(kind)
        self.value.append(value)
        self.target.append(target)
        self.root_of.append(owner)
        self.children.append([])
        self.weights.append([])
        return nid

    def add_edge(self, src, dst, w):
        if self.kind[src] in _SINKS:
            raise DPError(f"{self.kind[src]} node {src} cannot have children")
        if not 0.0 <= w <= 1.0:
            raise DPError(f"edge weight {w} outside [0, 1]")
        self.children[src].append(dst)
        self.weights[src].append(w)

    def __len__(self):
        return len(self.kind)

    @property
    def num_edges(self):
        return sum(len(c) for c in self.children)

    @property
    def roots(self):
        return [i for i, k in enumerate(self.kind) if k == ROOT]

    def owned(self, root):
        """Nodes owned by ``root`` in pre-order from the root."""
        out = []
        stack = [root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(self.children[n]))
        return out

    def counts(self):
        by_kind = {}
        for k in self.kind:
            by_kind[k] = by_kind.get(k, 0) + 1
        return {"nodes": len(self), "edges": self.num_edges, "roots": by_kind.get(ROOT, 0), "by_kind": by_kind}


def evaluate(g, y, selected, ref_values):
    """Value of node ``y`` with ``selected`` as the chosen return value.

    ``ref_values`` maps ``(root, value)`` to a probability for every ref
    reachable from ``y``.  Memoized per node, so linear in the subgraph.
    """
    memo = {}
    stack = [(y, False)]
    while stack:
        n, ready = stack.pop()
        if n in memo:
            continue
        kind = g.kind[n]
        if kind == INDICATOR:
            memo[n] = 1.0 if g.value[n] == selected else 0.0
        elif kind == REF:
            key = (g.target[n], g.value[n])
            if key not in ref_values:
                raise MissingReference(f"no value for ref (root {key[0]}, {S.to_text(key[1])})")
            memo[n] = ref_values[key]
        elif not ready:
            stack.append((n, True))
            stack.extend((c, False) for c in g.children[n] if c not in memo)
        elif kind == PRODUCT:
            acc = 1.0
            for c in g.children[n]:
                acc *= memo[c]
            memo[n] = acc
        else:
            acc = 0.0
            for c, w in zip(g.children[n], g.weights[n]):
                acc += w * memo[c]
            memo[n] = acc
    return memo[y]


def _fmt(w):
    return format(w, ".6g")


def _label(g, n):
    kind = g.kind[n]
    if kind == ROOT:
        return f"root {n}"
    if kind == SUM:
        return "+"
    if kind == PRODUCT:
        return "×"
    if kind == INDICATOR:
        return f"[{S.to_text(g.value[n])}]"
    return f"P(r{g.target[n]}={S.to_text(g.value[n])})"


def emit_dot(g):
    """Graphviz rendering; byte-identical for identical graphs."""
    lines = ["digraph fspn {", "  node [fontname=Helvetica];"]
    shapes = {ROOT: "doubleoctagon", SUM: "circle", PRODUCT: "circle", INDICATOR: "box", REF: "box"}
    for n in range(len(g)):
        label = json.dumps(_label(g, n), ensure_ascii=False)
        style = ", style=dashed" if g.kind[n] == REF else ""
        lines.append(f"  n{n} [label={label}, shape={shapes[g.kind[n]]}{style}];")
    for n in range(len(g)):
        for c, w in zip(g.children[n], g.weights[n]):
            lines.append(f'  n{n} -> n{c} [label="{_fmt(w)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json_dict(g):
    nodes = []
    for n in range(len(g)):
        d = {"id": n, "kind": g.kind[n]}
        if g.kind[n] in _SINKS:
            d["value"] = S.to_text(g.value[n])
        if g.kind[n] == REF:
            d["root"] = g.target[n]
        nodes.append(d)
    edges = [
        {"from": n, "to": c, "w": w}
        for n in range(len(g))
        for c, w in zip(g.children[n], g.weights[n])
    ]
    return {"nodes": nodes, "edges": edges, "globalRoot": g.global_root}


def emit_json(g):
    return json.dumps(to_json_dict(g), ensure_ascii=False)
