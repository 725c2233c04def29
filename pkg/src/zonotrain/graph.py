"""Explicit computation graph: tensors are integer ids, ops are nodes.

The graph is append-only — an op may only consume tensors that already
exist — so construction cannot create cycles.  ``topological_order`` still
runs Kahn's algorithm and raises on cycles to guard graphs deserialized
from checkpoints.

``extract_subgraph`` computes the slice of the graph between a designated
input tensor and a set of output tensors: exactly the piece the abstract
transform engine walks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ReachabilityError, StructureError
from .tensor import ARITY, ATTR_KEYS, OpKind, eval_op


@dataclass
class TensorInfo:
    """Static metadata for one tensor id."""
    role: str                   # "placeholder" | "constant" | "variable" | "op_output"
    shape: tuple = None         # may contain -1 for unknown dims; None if untracked
    name: str = None


@dataclass
class OpNode:
    kind: OpKind
    inputs: list
    outputs: list
    attrs: dict = field(default_factory=dict)


class Graph:
    def __init__(self):
        self.nodes = []           # list[OpNode], construction order
        self.infos = {}           # tensor id -> TensorInfo
        self.producer = {}        # tensor id -> node index
        self.consumers = {}       # tensor id -> list of node indices
        self.values = {}          # tensor id -> ndarray (constants + variables)
        self.variables = {}       # name -> tensor id
        self._next = 0

    # -- construction -----------------------------------------------------

    def _new_tensor(self, role, shape=None, name=None):
        tid = self._next
        self._next += 1
        self.infos[tid] = TensorInfo(role, tuple(shape) if shape is not None else None, name)
        self.consumers[tid] = []
        return tid

    def placeholder(self, shape, name=None):
        return self._new_tensor("placeholder", shape, name)

    def constant(self, value, name=None):
        value = np.asarray(value, dtype=np.float64)
        tid = self._new_tensor("constant", value.shape, name)
        self.values[tid] = value
        return tid

    def variable(self, name, value):
        if name in self.variables:
            raise StructureError(f"duplicate variable name {name!r}")
        value = np.asarray(value, dtype=np.float64)
        tid = self._new_tensor("variable", value.shape, name)
        self.values[tid] = value
        self.variables[name] = tid
        return tid

    def set_variable(self, tid, value):
        if self.infos[tid].role != "variable":
            raise StructureError(f"tensor {tid} is not a variable")
        self.values[tid] = np.asarray(value, dtype=np.float64)

    def add_op(self, kind, inputs, attrs=None, n_outputs=1):
        kind = OpKind(kind)
        attrs = dict(attrs or {})
        extra = set(attrs) - ATTR_KEYS.get(kind, set())
        if extra:
            raise StructureError(f"{kind.value} does not take attrs {sorted(extra)}")
        arity = ARITY[kind]
        if arity is not None and len(inputs) != arity:
            raise DimensionError(f"{kind.value} expects {arity} inputs, got {len(inputs)}")
        if arity is None and not inputs:
            raise DimensionError(f"{kind.value} needs at least one input")
        for t in inputs:
            if t not in self.infos:
                raise StructureError(f"op input {t} does not exist")
        idx = len(self.nodes)
        outputs = [self._new_tensor("op_output") for _ in range(n_outputs)]
        node = OpNode(kind, list(inputs), outputs, attrs)
        self.nodes.append(node)
        for t in inputs:
            self.consumers[t].append(idx)
        for t in outputs:
            self.producer[t] = idx
        return outputs

    def apply(self, kind, *inputs, **attrs):
        """Single-output convenience wrapper around add_op."""
        return self.add_op(kind, list(inputs), attrs)[0]

    # -- structure --------------------------------------------------------

    def topological_order(self, targets=None):
        """Node indices in dependency order; restricted to ancestors of
        ``targets`` when given.  Raises StructureError on cycles."""
        if targets is None:
            wanted = set(range(len(self.nodes)))
        else:
            wanted = set()
            stack = [self.producer[t] for t in targets if t in self.producer]
            while stack:
                n = stack.pop()
                if n in wanted:
                    continue
                wanted.add(n)
                for t in self.nodes[n].inputs:
                    if t in self.producer:
                        stack.append(self.producer[t])
        indeg = {}
        dependents = {n: [] for n in wanted}
        for n in wanted:
            deps = {self.producer[t] for t in self.nodes[n].inputs
                    if t in self.producer and self.producer[t] in wanted}
            indeg[n] = len(deps)
            for d in deps:
                dependents[d].append(n)
        ready = sorted(n for n in wanted if indeg[n] == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in sorted(dependents[n]):
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(order) != len(wanted):
            raise StructureError("cycle detected in graph")
        return order

    # -- evaluation --------------------------------------------------------

    def forward(self, feeds, targets):
        """Evaluate ``targets`` from registry values + feeds.

        Feeds pin their tensors (producers upstream of a fed tensor are not
        required and fed values are never overwritten), so intermediate
        tensors can be fed directly.  Returns (node order, value dict).
        """
        values = dict(self.values)
        pinned = set()
        for tid, v in (feeds or {}).items():
            if tid not in self.infos:
                raise StructureError(f"feed for unknown tensor {tid}")
            values[tid] = np.asarray(v, dtype=np.float64)
            pinned.add(tid)
        # backward walk from targets, stopping at known values
        wanted = set()
        stack = list(targets)
        seen = set()
        while stack:
            t = stack.pop()
            if t in seen or t in values:
                continue
            seen.add(t)
            if t not in self.producer:
                info = self.infos[t]
                raise StructureError(
                    f"no value for {info.role} tensor {t} ({info.name})")
            n = self.producer[t]
            if n not in wanted:
                wanted.add(n)
                stack.extend(self.nodes[n].inputs)
        # Kahn over the needed nodes
        indeg = {}
        dependents = {n: [] for n in wanted}
        for n in wanted:
            deps = {self.producer[t] for t in self.nodes[n].inputs
                    if t not in values and t in self.producer
                    and self.producer[t] in wanted}
            indeg[n] = len(deps)
            for d in deps:
                dependents[d].append(n)
        ready = sorted(n for n in wanted if indeg[n] == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            node = self.nodes[n]
            ins = [values[t] for t in node.inputs]
            outs = eval_op(node.kind, ins, node.attrs)
            for t, v in zip(node.outputs, outs):
                if t not in pinned:
                    values[t] = v
            for m in sorted(dependents[n]):
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(order) != len(wanted):
            raise StructureError("cycle detected in graph")
        for t in targets:
            if t not in values:
                info = self.infos[t]
                raise StructureError(f"target tensor {t} ({info.name}) has no value")
        return order, values

    def evaluate(self, feeds, targets):
        _, values = self.forward(feeds, targets)
        return [values[t] for t in targets]


@dataclass
class SubgraphIndex:
    """Slice of a graph between one input tensor and a set of outputs.

    members:      tensor ids on some input->output path (incl. both ends)
    ops:          node indices whose firing the transform pass performs
    consumers:    member tensor id -> sorted node indices (subset of ops)
    outputs_of:   node index -> its output tensor ids
    """
    input: int
    outputs: list
    members: set
    ops: set
    consumers: dict
    outputs_of: dict


def extract_subgraph(g, x, outputs):
    if x not in g.infos:
        raise StructureError(f"input tensor {x} does not exist")
    for z in outputs:
        if z not in g.infos:
            raise StructureError(f"output tensor {z} does not exist")
    # forward reachability from x over op nodes
    fwd = {x}
    frontier = [x]
    while frontier:
        t = frontier.pop()
        for n in g.consumers[t]:
            for o in g.nodes[n].outputs:
                if o not in fwd:
                    fwd.add(o)
                    frontier.append(o)
    missing = [z for z in outputs if z not in fwd]
    if missing:
        raise ReachabilityError(f"outputs {missing} not reachable from input {x}")
    # backward reachability from the outputs
    bwd = set()
    frontier = [z for z in outputs]
    while frontier:
        t = frontier.pop()
        if t in bwd:
            continue
        bwd.add(t)
        if t in g.producer:
            frontier.extend(g.nodes[g.producer[t]].inputs)
    members = fwd & bwd
    consumers = {}
    ops = set()
    outputs_of = {}
    for t in members:
        cs = [n for n in g.consumers[t]
              if any(o in members for o in g.nodes[n].outputs)]
        if cs:
            consumers[t] = sorted(set(cs))
            ops.update(cs)
    for n in ops:
        outputs_of[n] = [o for o in g.nodes[n].outputs if o in members]
    return SubgraphIndex(x, list(outputs), members, ops, consumers, outputs_of)
