"""The automatic transformer-generation pass.

Given a graph, an input tensor x, requested output tensors, and an initial
domain element d0 at x, the worklist pass walks the x->outputs subgraph and
builds a map TensorId -> (domain element | None), firing each op's abstract
transformer exactly once, after all of its in-subgraph inputs have entries.

Inputs outside the map (weights, constants, out-of-slice tensors) and
inputs mapped to None (Shape results and the like) are passed as plain
tensors: concrete values in eager mode, graph tensor handles in symbolic
mode.  In eager mode those values come from evaluating the original graph
with x pinned at d0's center — sound because None-mapped tensors cannot
depend on where in the concretization x actually lies.
"""

import numpy as np

from . import ops
from .domains import is_abstract, transform_op
from .errors import StructureError
from .graph import extract_subgraph


def _is_symbolic(d0):
    parts = [d0.c, d0.b] + ([d0.E] if getattr(d0, "E", None) is not None else [])
    return any(ops.is_sym(p) for p in parts)


def transform_map(g, x, outputs, d0, traversal="depth"):
    """Run the worklist pass; returns the full tensor-id -> element map."""
    if traversal not in ("depth", "breadth"):
        raise ValueError(f"unknown traversal {traversal!r}")
    sub = extract_subgraph(g, x, outputs)
    symbolic = _is_symbolic(d0)
    tmap = {x: d0}
    cache = {}

    def plain_value(t):
        if symbolic:
            return ops.Sym(g, t)
        if t in g.values:
            return g.values[t]
        if t not in cache:
            _, vals = g.forward({x: np.asarray(d0.c, dtype=np.float64)}, [t])
            cache.update(vals)
        return cache[t]

    front = [x]
    fired = set()
    while front:
        s = front.pop() if traversal == "depth" else front.pop(0)
        for n in sub.consumers.get(s, []):
            if n in fired:
                continue
            node = g.nodes[n]
            if any(t in sub.members and t not in tmap for t in node.inputs):
                continue  # wait until every in-subgraph input is transformed
            args = [tmap[t] if tmap.get(t) is not None else plain_value(t)
                    for t in node.inputs]
            outs = transform_op(node.kind, args, node.attrs)
            fired.add(n)
            if len(fired) > len(sub.ops):
                raise StructureError("transform pass exceeded its op budget")
            for t, val in zip(node.outputs, outs):
                if t in tmap:
                    raise StructureError(f"transform map rewrite of tensor {t}")
                tmap[t] = val
                front.append(t)
    for z in outputs:
        if z not in tmap:
            raise StructureError(f"output {z} not transformed after fixpoint")
    return tmap


def transform(g, x, outputs, d0, traversal="depth"):
    """Domain element (or None) per requested output tensor."""
    tmap = transform_map(g, x, outputs, d0, traversal)
    return [tmap[z] for z in outputs]


def check_graph_supported(g, domain_cls, targets=None):
    """Ops (restricted to ancestors of targets) lacking a transformer.

    Returns a sorted list of unsupported op-kind names — empty when the
    whole graph can be pushed through the given domain.
    """
    from .domains import supports
    order = g.topological_order(targets)
    bad = set()
    for n in order:
        kind = g.nodes[n].kind
        if not supports(kind, domain_cls):
            bad.add(kind.value)
    return sorted(bad)
