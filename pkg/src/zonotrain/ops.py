"""Dual-mode op primitives.

Each primitive takes ndarrays and/or :class:`Sym` handles.  With plain
arrays it runs the concrete kernel immediately; with at least one ``Sym``
it appends an op node to that Sym's graph and returns a new ``Sym``.

The abstract domain transformers are written once against these
primitives, so the same code path produces concrete interval arithmetic
during verification and differentiable subgraphs during robust training.
"""

import numpy as np

from .errors import StructureError
from .graph import Graph
from .tensor import OpKind, eval_op


class Sym:
    """Handle to a tensor id inside a graph."""

    __slots__ = ("graph", "tid")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, graph, tid):
        self.graph = graph
        self.tid = tid

    def __repr__(self):
        info = self.graph.infos[self.tid]
        return f"Sym({self.tid}, {info.role}, name={info.name})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)


def is_sym(v):
    return isinstance(v, Sym)


def _common_graph(args):
    g = None
    for a in args:
        if is_sym(a):
            if g is None:
                g = a.graph
            elif g is not a.graph:
                raise StructureError("mixing Syms from different graphs")
    return g


def _lift(g, v):
    if is_sym(v):
        return v.tid
    return g.constant(v)


def _apply(kind, args, attrs=None):
    g = _common_graph(args)
    if g is None:
        return eval_op(kind, [np.asarray(a, dtype=np.float64) for a in args],
                       attrs or {})[0]
    tids = [_lift(g, a) for a in args]
    return Sym(g, g.add_op(kind, tids, attrs)[0])


def matmul(a, b): return _apply(OpKind.MATMUL, [a, b])
def conv2d(x, k, stride, padding):
    return _apply(OpKind.CONV2D, [x, k], {"stride": int(stride), "padding": padding})
def bias_add(x, b): return _apply(OpKind.BIAS_ADD, [x, b])
def add(a, b): return _apply(OpKind.ADD, [a, b])
def sub(a, b): return _apply(OpKind.SUB, [a, b])
def mul(a, b): return _apply(OpKind.MUL, [a, b])
def div(a, b): return _apply(OpKind.REAL_DIV, [a, b])
def neg(x): return _apply(OpKind.NEG, [x])
def abs_(x): return _apply(OpKind.ABS, [x])
def exp(x): return _apply(OpKind.EXP, [x])
def log(x): return _apply(OpKind.LOG, [x])
def log1p(x): return _apply(OpKind.LOG1P, [x])
def relu(x): return _apply(OpKind.RELU, [x])
def sigmoid(x): return _apply(OpKind.SIGMOID, [x])
def softmax(x, axis=-1): return _apply(OpKind.SOFTMAX, [x], {"axis": int(axis)})
def maximum(a, b): return _apply(OpKind.MAXIMUM, [a, b])
def minimum(a, b): return _apply(OpKind.MINIMUM, [a, b])
def greater_equal(a, b): return _apply(OpKind.GREATER_EQUAL, [a, b])
def max_pool2(x): return _apply(OpKind.MAX_POOL2, [x])
def reduce_mean(x, axis=None, keepdims=False):
    return _apply(OpKind.MEAN, [x], {"axis": axis, "keepdims": bool(keepdims)})
def reduce_sum(x, axis=None, keepdims=False):
    return _apply(OpKind.SUM, [x], {"axis": axis, "keepdims": bool(keepdims)})
def reshape(x, shape):
    return _apply(OpKind.RESHAPE, [x], {"shape": [int(s) for s in shape]})
def transpose(x, perm=None):
    return _apply(OpKind.TRANSPOSE, [x],
                  {"perm": None if perm is None else [int(p) for p in perm]})
def concat(xs, axis): return _apply(OpKind.CONCAT, list(xs), {"axis": int(axis)})
def strided_slice(x, begin=None, end=None, strides=None):
    return _apply(OpKind.STRIDED_SLICE, [x],
                  {"begin": begin, "end": end, "strides": strides})
def shape_of(x): return _apply(OpKind.SHAPE, [x])
def ones_like(x): return _apply(OpKind.ONES_LIKE, [x])
def zeros_like(x): return _apply(OpKind.ZEROS_LIKE, [x])
def pack(xs, axis=0): return _apply(OpKind.PACK, list(xs), {"axis": int(axis)})
def select(mask, a, b): return _apply(OpKind.SELECT, [mask, a, b])
