"""Reverse-mode differentiation over the graph IR.

A forward pass records the evaluated node order plus a value cache into a
:class:`Tape`; the backward sweep walks the tape in reverse accumulating
vector-Jacobian products.  Subgradient conventions: Relu'(0) = 0, Abs'(0)
= 0, and Maximum/Minimum route ties to their first argument.  Comparison
and shape-query ops (GreaterEqual, Shape, OnesLike, ZerosLike, Select's
mask) contribute zero gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import StructureError
from .tensor import OpKind


@dataclass
class Tape:
    """Forward record: node indices in evaluation order plus value/adjoint caches."""
    nodes: list
    values: dict
    adjoints: dict = field(default_factory=dict)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _expand_reduced(g, x_shape, axis, keepdims):
    """Broadcast a Mean/Sum output gradient back to the input shape."""
    if axis is None:
        return np.broadcast_to(g, x_shape)
    axes = T._norm_axis(axis, len(x_shape))
    if isinstance(axes, int):
        axes = (axes,)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, x_shape)


def _vjp(node, ins, outs, gouts):
    """Per-op VJP: returns a gradient (or None) per input slot."""
    k = node.kind
    g = gouts[0]
    a = node.attrs
    if k is OpKind.MATMUL:
        x, w = ins
        gx = np.matmul(g, np.swapaxes(w, -1, -2))
        gw = np.matmul(np.swapaxes(x, -1, -2), g)
        return [_unbroadcast(gx, x.shape), _unbroadcast(gw, w.shape)]
    if k is OpKind.CONV2D:
        x, w = ins
        return [T.conv2d_backward(x.shape, w, a["stride"], a["padding"], g),
                T.conv2d_kernel_grad(x, w.shape, a["stride"], a["padding"], g)]
    if k is OpKind.BIAS_ADD:
        x, b = ins
        return [g, g.reshape(-1, b.shape[0]).sum(axis=0)]
    if k is OpKind.ADD:
        return [_unbroadcast(g, ins[0].shape), _unbroadcast(g, ins[1].shape)]
    if k is OpKind.SUB:
        return [_unbroadcast(g, ins[0].shape), _unbroadcast(-g, ins[1].shape)]
    if k is OpKind.MUL:
        return [_unbroadcast(g * ins[1], ins[0].shape),
                _unbroadcast(g * ins[0], ins[1].shape)]
    if k is OpKind.REAL_DIV:
        x, y = ins
        return [_unbroadcast(g / y, x.shape),
                _unbroadcast(-g * x / (y * y), y.shape)]
    if k is OpKind.NEG:
        return [-g]
    if k is OpKind.ABS:
        return [g * np.sign(ins[0])]
    if k is OpKind.EXP:
        return [g * outs[0]]
    if k is OpKind.LOG:
        return [g / ins[0]]
    if k is OpKind.LOG1P:
        return [g / (1.0 + ins[0])]
    if k is OpKind.RELU:
        return [g * (ins[0] > 0.0)]
    if k is OpKind.SIGMOID:
        s = outs[0]
        return [g * s * (1.0 - s)]
    if k is OpKind.SOFTMAX:
        s = outs[0]
        axis = a.get("axis", -1)
        return [(g - np.sum(g * s, axis=axis, keepdims=True)) * s]
    if k is OpKind.MAXIMUM:
        m = ins[0] >= ins[1]
        return [_unbroadcast(g * m, ins[0].shape),
                _unbroadcast(g * ~m, ins[1].shape)]
    if k is OpKind.MINIMUM:
        m = ins[0] <= ins[1]
        return [_unbroadcast(g * m, ins[0].shape),
                _unbroadcast(g * ~m, ins[1].shape)]
    if k is OpKind.GREATER_EQUAL:
        return [None, None]
    if k is OpKind.MAX_POOL2:
        return [T.max_pool2_backward(ins[0], g)]
    if k in (OpKind.MEAN, OpKind.SUM):
        gx = _expand_reduced(g, ins[0].shape, a.get("axis"), a.get("keepdims", False))
        if k is OpKind.MEAN:
            gx = gx * (outs[0].size / ins[0].size)
        return [np.ascontiguousarray(gx)]
    if k is OpKind.RESHAPE:
        return [g.reshape(ins[0].shape)]
    if k is OpKind.TRANSPOSE:
        perm = a.get("perm")
        if perm is None:
            return [np.transpose(g)]
        return [np.transpose(g, np.argsort(perm))]
    if k is OpKind.CONCAT:
        axis = a["axis"]
        sizes = [x.shape[axis] for x in ins]
        return list(np.split(g, np.cumsum(sizes)[:-1], axis=axis))
    if k is OpKind.STRIDED_SLICE:
        gx = np.zeros_like(ins[0])
        sl = T.slices_from_attrs(a.get("begin"), a.get("end"), a.get("strides"),
                                 ins[0].ndim)
        gx[sl] = g
        return [gx]
    if k in (OpKind.SHAPE, OpKind.ONES_LIKE, OpKind.ZEROS_LIKE):
        return [None]
    if k is OpKind.PACK:
        return list(np.moveaxis(g, a.get("axis", 0), 0))
    if k is OpKind.SELECT:
        m = ins[0] != 0.0
        return [None, _unbroadcast(g * m, ins[1].shape),
                _unbroadcast(g * ~m, ins[2].shape)]
    raise NotImplementedError(f"no VJP for {k}")  # pragma: no cover


def forward_tape(g, feeds, targets):
    order, values = g.forward(feeds, targets)
    return Tape(order, values)


def backprop(g, tape, loss, params):
    """Fill tape adjoints for ancestors of ``loss``; return grads per param id."""
    lossval = tape.values[loss]
    if lossval.size != 1:
        raise StructureError(f"loss must be scalar, got shape {lossval.shape}")
    adj = tape.adjoints
    adj[loss] = np.ones_like(lossval)
    for n in reversed(tape.nodes):
        node = g.nodes[n]
        gouts = []
        any_grad = False
        for o in node.outputs:
            go = adj.get(o)
            if go is None:
                go = np.zeros_like(tape.values[o])
            else:
                any_grad = True
            gouts.append(go)
        if not any_grad:
            continue
        ins = [tape.values[t] for t in node.inputs]
        outs = [tape.values[t] for t in node.outputs]
        gins = _vjp(node, ins, outs, gouts)
        for t, gi in zip(node.inputs, gins):
            if gi is None:
                continue
            if t in adj:
                adj[t] = adj[t] + gi
            else:
                adj[t] = np.asarray(gi, dtype=np.float64)
    grads = {}
    for p in params:
        if p in adj:
            grads[p] = adj[p]
        else:
            base = tape.values.get(p)
            if base is None:
                base = g.values.get(p)
            if base is None:
                raise StructureError(f"no value known for parameter tensor {p}")
            grads[p] = np.zeros_like(np.asarray(base, dtype=np.float64))
    return grads


def gradient(g, loss, params, feeds=None):
    """d(loss)/d(params): forward + reverse sweep in one call."""
    tape = forward_tape(g, feeds or {}, [loss])
    return backprop(g, tape, loss, params)
