"""Abstract domain elements and their per-op transformers.

Two domains:

* ``Box``: per-coordinate intervals ``<c, b>`` (center, half-width).
* ``HybridZonotope``: ``<c, b, E>`` — a box term plus ``e`` shared
  generators stacked along a leading axis, so the concretization is
  ``{c + sum_k v_k E_k + b*w : |v_k| <= 1, |w| <= 1}``.

Generator stacks carry an integer *origin* tag naming their coordinate
system: elements with equal tags share the same ``v`` and merge
generator-wise; different tags concatenate (see ``add_hz``).

All transformers are written against :mod:`zonotrain.ops`, so they run
eagerly on arrays (verification) or emit graph nodes (robust training).
A few transformers need runtime values or ranks and therefore only
support the eager path; they raise ``UnsupportedOpError`` when handed
symbolic inputs.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import DomainError, StructureError, UnsupportedOpError
from .tensor import OpKind

_origin_counter = itertools.count(1)


def fresh_origin():
    return next(_origin_counter)


@dataclass(frozen=True)
class Box:
    c: object
    b: object


@dataclass(frozen=True)
class HybridZonotope:
    c: object
    b: object
    E: object = None   # stacked (e, *shape-broadcastable-with-c), None iff e == 0
    e: int = 0
    origin: int = 0    # 0 = no generators


@dataclass(frozen=True)
class OutputBounds:
    lower: object
    upper: object


def is_abstract(v):
    return isinstance(v, (Box, HybridZonotope))


def hz(c, b=None, E=None, origin=None):
    """Convenience constructor normalizing b/E defaults."""
    if b is None:
        b = ops.zeros_like(c)
    if E is None:
        return HybridZonotope(c, b, None, 0, 0)
    e = int(np.shape(E)[0]) if not ops.is_sym(E) else None
    if e is None:
        raise StructureError("symbolic E needs explicit generator count; use HybridZonotope directly")
    if e == 0:
        return HybridZonotope(c, b, None, 0, 0)
    return HybridZonotope(c, b, np.asarray(E, dtype=np.float64), e,
                          fresh_origin() if origin is None else origin)


def bounds(d):
    """Tightest axis-aligned interval hull of the concretization."""
    if isinstance(d, Box):
        r = d.b
    elif isinstance(d, HybridZonotope):
        if d.e:
            r = ops.add(d.b, ops.reduce_sum(ops.abs_(d.E), axis=0))
        else:
            r = d.b
    else:
        raise TypeError(f"not a domain element: {type(d)}")
    return OutputBounds(ops.sub(d.c, r), ops.add(d.c, r))


def validate(d):
    """Eager invariant check (tests/debugging); returns d."""
    if isinstance(d, HybridZonotope):
        if (d.e == 0) != (d.E is None):
            raise StructureError("generator count and stack disagree")
        if d.e and np.shape(d.E)[0] != d.e:
            raise StructureError("generator stack leading axis != e")
    ob = bounds(d)
    lo, hi = ob.lower, ob.upper
    if ops.is_sym(lo):
        return d
    b = np.asarray(d.b, dtype=np.float64)
    if np.any(b < 0):
        raise DomainError("half-widths must be nonnegative")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError("concretization bounds must be finite")
    return d


def sample(d, rng, n):
    """n concrete points from the concretization (eager only)."""
    c = np.asarray(d.c, dtype=np.float64)
    b = np.broadcast_to(np.asarray(d.b, dtype=np.float64), c.shape)
    w = rng.uniform(-1.0, 1.0, size=(n,) + c.shape)
    pts = c + b * w
    if isinstance(d, HybridZonotope) and d.e:
        E = np.asarray(d.E, dtype=np.float64)
        v = rng.uniform(-1.0, 1.0, size=(n, d.e) + (1,) * (E.ndim - 1))
        pts = pts + np.sum(v * E, axis=1)
    return pts


# ---------------------------------------------------------------------------
# generator bookkeeping

def _expand_gens(E, like_c):
    """Broadcast each generator up to the center's full shape."""
    return ops.mul(E, ops.ones_like(like_c))


def _zero_gens(e, like):
    if ops.is_sym(like):
        z = ops.zeros_like(like)
        return ops.pack([z] * e, axis=0)
    return np.zeros((e,) + np.shape(np.asarray(like, dtype=np.float64)))


def add_hz(a, b):
    """Minkowski-style sum of two hybrid zonotopes over the same tensor shape.

    Same origin: the elements share generator coefficients, so stacks add
    index-wise.  Different origins: coefficients are independent — stacks
    concatenate along the generator axis under a fresh origin.
    """
    c = ops.add(a.c, b.c)
    bb = ops.add(a.b, b.b)
    if a.e == 0 and b.e == 0:
        return HybridZonotope(c, bb, None, 0, 0)
    if a.e == 0:
        return HybridZonotope(c, bb, b.E, b.e, b.origin)
    if b.e == 0:
        return HybridZonotope(c, bb, a.E, a.e, a.origin)
    if a.origin == b.origin:
        if a.e != b.e:
            raise StructureError("same-origin zonotopes with different generator counts")
        return HybridZonotope(c, bb, ops.add(a.E, b.E), a.e, a.origin)
    Ea = _expand_gens(a.E, c)
    Eb = _expand_gens(b.E, c)
    return HybridZonotope(c, bb, ops.concat([Ea, Eb], 0), a.e + b.e, fresh_origin())


def decorrelate(d):
    """Fold all generator mass into the box term (bounds-preserving)."""
    if d.e == 0:
        return HybridZonotope(d.c, d.b, None, 0, 0)
    b = ops.add(d.b, ops.reduce_sum(ops.abs_(d.E), axis=0))
    b = ops.mul(b, ops.ones_like(d.c))
    return HybridZonotope(d.c, b, None, 0, 0)


def correlate(d):
    """Move the box term into fresh diagonal generators (bounds-preserving)."""
    if ops.is_sym(d.c) or ops.is_sym(d.b):
        raise UnsupportedOpError("correlate", HybridZonotope, "eager inputs required")
    c = np.asarray(d.c, dtype=np.float64)
    b = np.broadcast_to(np.asarray(d.b, dtype=np.float64), c.shape)
    p = c.size
    diag = np.zeros((p,) + c.shape)
    flat = diag.reshape(p, p)
    np.fill_diagonal(flat, b.ravel())
    zb = np.zeros_like(c)
    if d.e == 0:
        return HybridZonotope(c, zb, diag, p, fresh_origin())
    E = np.broadcast_to(np.asarray(d.E, dtype=np.float64), (d.e,) + c.shape)
    return HybridZonotope(c, zb, np.concatenate([E, diag], axis=0),
                          d.e + p, fresh_origin())


def get_adversary(d, y):
    """Bounding-box vertex farthest (L2) from target y, per coordinate.

    Picks whichever of lower/upper lies farther from y in each coordinate;
    exact ties go to the upper bound.
    """
    lo, hi = bounds(d).lower, bounds(d).upper
    dl = ops.abs_(ops.sub(lo, y))
    du = ops.abs_(ops.sub(hi, y))
    return ops.select(ops.greater_equal(du, dl), hi, lo)


# ---------------------------------------------------------------------------
# support table

# Transcription of the published per-op support matrix: kind -> (box, hz, note)
APPENDIX_TABLE = {
    OpKind.ABS: (False, True, ""),
    OpKind.ADD: (True, True, ""),
    OpKind.BIAS_ADD: (True, True, ""),
    OpKind.CONCAT: (True, True, "only between HZ and plain tensor"),
    OpKind.CONV2D: (True, True, "the second input should be a plain tensor"),
    OpKind.EXP: (False, True, ""),
    OpKind.GREATER_EQUAL: (True, True, ""),
    OpKind.LOG: (False, True, ""),
    OpKind.LOG1P: (False, True, ""),
    OpKind.MATMUL: (True, True, "only first input HZ"),
    OpKind.MAXIMUM: (False, True, ""),
    OpKind.MAX_POOL2: (True, True, "2x2 stride-2 pooling only"),
    OpKind.MEAN: (False, True, ""),
    OpKind.MINIMUM: (False, True, ""),
    OpKind.MUL: (True, True, ""),
    OpKind.NEG: (True, True, ""),
    OpKind.ONES_LIKE: (True, True, ""),
    OpKind.PACK: (True, False, ""),
    OpKind.REAL_DIV: (True, True, ""),
    OpKind.RELU: (True, True, ""),
    OpKind.RESHAPE: (True, True, ""),
    OpKind.SELECT: (False, True, "first input not HZ"),
    OpKind.SHAPE: (True, True, ""),
    OpKind.SIGMOID: (True, True, ""),
    OpKind.SOFTMAX: (True, True, ""),
    OpKind.STRIDED_SLICE: (True, True, ""),
    OpKind.SUB: (True, True, ""),
    OpKind.SUM: (False, True, ""),
    OpKind.TRANSPOSE: (True, True, ""),
    OpKind.ZEROS_LIKE: (True, True, ""),
}

# Box-side interval extensions beyond the published table, where interval
# semantics are the obvious reading (asymmetry recorded in the docs).
BOX_EXTENSIONS = {
    OpKind.ABS, OpKind.EXP, OpKind.LOG, OpKind.LOG1P, OpKind.MAXIMUM,
    OpKind.MINIMUM, OpKind.MEAN, OpKind.SUM, OpKind.SELECT,
}


def supports(kind, domain_cls, extended=True):
    row = APPENDIX_TABLE.get(kind)
    if row is None:
        return False
    if domain_cls is Box:
        return row[0] or (extended and kind in BOX_EXTENSIONS)
    return row[1]


# ---------------------------------------------------------------------------
# interval helpers

def _to_interval(v):
    if isinstance(v, (Box, HybridZonotope)):
        ob = bounds(v)
        return ob.lower, ob.upper
    return v, v


def _from_interval(domain_cls, lo, hi):
    c = ops.mul(ops.add(lo, hi), 0.5)
    b = ops.maximum(ops.mul(ops.sub(hi, lo), 0.5), 0.0)
    if domain_cls is Box:
        return Box(c, b)
    return HybridZonotope(c, b, None, 0, 0)


def _require_eager(kind, D, values, what):
    for v in values:
        if ops.is_sym(v):
            raise UnsupportedOpError(kind, D, f"{what} requires eager inputs")


def _like(d, c=None, b=None, E=..., e=None, origin=None):
    """Copy an element with some parts replaced."""
    c = d.c if c is None else c
    b = d.b if b is None else b
    if isinstance(d, Box):
        return Box(c, b)
    if E is ...:
        E, e, origin = d.E, d.e, d.origin
    return HybridZonotope(c, b, E, d.e if e is None else e,
                          d.origin if origin is None else origin)


# ---------------------------------------------------------------------------
# axis bookkeeping for generator stacks (leading axis 0 is the generator axis)

def _shift_axis(axis):
    if axis is None:
        return None
    if isinstance(axis, (list, tuple)):
        return [_shift_axis(a) for a in axis]
    axis = int(axis)
    return axis + 1 if axis >= 0 else axis


# ---------------------------------------------------------------------------
# transformers

def _t_matmul(D, inputs, attrs):
    d, w = inputs
    if is_abstract(w):
        raise UnsupportedOpError(OpKind.MATMUL, D, "only the first input may be abstract")
    c = ops.matmul(d.c, w)
    b = ops.matmul(d.b, ops.abs_(w))
    if D is Box:
        return Box(c, b)
    E = ops.matmul(d.E, w) if d.e else None
    return HybridZonotope(c, b, E, d.e, d.origin)


def _t_conv2d(D, inputs, attrs):
    d, w = inputs
    if is_abstract(w):
        raise UnsupportedOpError(OpKind.CONV2D, D, "the kernel must be a plain tensor")
    s, p = attrs["stride"], attrs["padding"]
    c = ops.conv2d(d.c, w, s, p)
    b = ops.conv2d(d.b, ops.abs_(w), s, p)
    if D is Box:
        return Box(c, b)
    E = ops.conv2d(d.E, w, s, p) if d.e else None
    return HybridZonotope(c, b, E, d.e, d.origin)


def _t_bias_add(D, inputs, attrs):
    d, beta = inputs
    if is_abstract(beta):
        raise UnsupportedOpError(OpKind.BIAS_ADD, D, "the bias must be a plain tensor")
    return _like(d, c=ops.bias_add(d.c, beta))


def _t_add(D, inputs, attrs):
    a, b = inputs
    if is_abstract(a) and is_abstract(b):
        if D is Box:
            return Box(ops.add(a.c, b.c), ops.add(a.b, b.b))
        return add_hz(a, b)
    d, t = (a, b) if is_abstract(a) else (b, a)
    return _like(d, c=ops.add(d.c, t))


def _neg_elem(d):
    if isinstance(d, Box):
        return Box(ops.neg(d.c), d.b)
    return HybridZonotope(ops.neg(d.c), d.b,
                          ops.neg(d.E) if d.e else None, d.e, d.origin)


def _t_sub(D, inputs, attrs):
    a, b = inputs
    nb = _neg_elem(b) if is_abstract(b) else ops.neg(b)
    return _t_add(D, [a, nb], attrs)


def _t_neg(D, inputs, attrs):
    return _neg_elem(inputs[0])


def _scale_elem(d, t):
    """Multiply an element by a plain tensor (exact affine map)."""
    c = ops.mul(d.c, t)
    b = ops.mul(d.b, ops.abs_(t))
    if isinstance(d, Box):
        return Box(c, b)
    E = ops.mul(d.E, t) if d.e else None
    return HybridZonotope(c, b, E, d.e, d.origin)


def _t_mul(D, inputs, attrs):
    a, b = inputs
    if is_abstract(a) and is_abstract(b):
        la, ua = _to_interval(a)
        lb, ub = _to_interval(b)
        cands = [ops.mul(la, lb), ops.mul(la, ub), ops.mul(ua, lb), ops.mul(ua, ub)]
        lo = ops.minimum(ops.minimum(cands[0], cands[1]),
                         ops.minimum(cands[2], cands[3]))
        hi = ops.maximum(ops.maximum(cands[0], cands[1]),
                         ops.maximum(cands[2], cands[3]))
        return _from_interval(D, lo, hi)
    d, t = (a, b) if is_abstract(a) else (b, a)
    return _scale_elem(d, t)


def _t_real_div(D, inputs, attrs):
    a, b = inputs
    if not is_abstract(b):
        # exact scale by the reciprocal of a plain tensor
        recip = ops.div(1.0, b)
        return _scale_elem(a, recip)
    lb, ub = _to_interval(b)
    _require_eager(OpKind.REAL_DIV, D, [lb, ub], "abstract divisor")
    lb, ub = np.asarray(lb, dtype=np.float64), np.asarray(ub, dtype=np.float64)
    if np.any((lb <= 0.0) & (ub >= 0.0)):
        raise DomainError("RealDiv divisor interval straddles zero")
    la, ua = _to_interval(a)
    cands = [la / lb, la / ub, ua / lb, ua / ub]
    return _from_interval(D, np.minimum.reduce(cands), np.maximum.reduce(cands))


def _t_extremum(kind):
    op = ops.maximum if kind is OpKind.MAXIMUM else ops.minimum
    def t(D, inputs, attrs):
        la, ua = _to_interval(inputs[0])
        lb, ub = _to_interval(inputs[1])
        return _from_interval(D, op(la, lb), op(ua, ub))
    return t


def _t_greater_equal(D, inputs, attrs):
    la, ua = _to_interval(inputs[0])
    lb, ub = _to_interval(inputs[1])
    lo = ops.greater_equal(la, ub)   # 1 only where the comparison always holds
    hi = ops.greater_equal(ua, lb)   # 1 where it possibly holds
    return _from_interval(D, lo, hi)


def _t_max_pool2(D, inputs, attrs):
    lo, hi = _to_interval(inputs[0])
    return _from_interval(D, ops.max_pool2(lo), ops.max_pool2(hi))


def _t_reduce(kind):
    op = ops.reduce_mean if kind is OpKind.MEAN else ops.reduce_sum
    def t(D, inputs, attrs):
        d = inputs[0]
        axis = attrs.get("axis")
        keep = attrs.get("keepdims", False)
        if axis is None and isinstance(d, HybridZonotope) and d.e:
            if ops.is_sym(d.c) or ops.is_sym(d.E):
                raise UnsupportedOpError(kind, D, "axis=None needs eager inputs")
            axis = tuple(range(np.asarray(d.c).ndim))
        c = op(d.c, axis, keep)
        b = op(ops.mul(d.b, ops.ones_like(d.c)), axis, keep)
        if D is Box:
            return Box(c, b)
        E = op(_expand_gens(d.E, d.c), _shift_axis(axis), keep) if d.e else None
        return HybridZonotope(c, b, E, d.e, d.origin)
    return t


def _t_reshape(D, inputs, attrs):
    d = inputs[0]
    shape = [int(s) for s in attrs["shape"]]
    c = ops.reshape(d.c, shape)
    b = ops.reshape(ops.mul(d.b, ops.ones_like(d.c)), shape)
    if D is Box:
        return Box(c, b)
    E = ops.reshape(d.E, [d.e] + shape) if d.e else None
    return HybridZonotope(c, b, E, d.e, d.origin)


def _t_transpose(D, inputs, attrs):
    d = inputs[0]
    perm = attrs.get("perm")
    if perm is None:
        if ops.is_sym(d.c):
            raise UnsupportedOpError(OpKind.TRANSPOSE, D, "explicit perm required symbolically")
        perm = list(range(np.asarray(d.c).ndim))[::-1]
    c = ops.transpose(d.c, perm)
    b = ops.transpose(ops.mul(d.b, ops.ones_like(d.c)), perm)
    if D is Box:
        return Box(c, b)
    E = None
    if d.e:
        E = ops.transpose(_expand_gens(d.E, d.c), [0] + [int(p) + 1 for p in perm])
    return HybridZonotope(c, b, E, d.e, d.origin)


def _t_strided_slice(D, inputs, attrs):
    d = inputs[0]
    bg, en, st = attrs.get("begin"), attrs.get("end"), attrs.get("strides")
    c = ops.strided_slice(d.c, bg, en, st)
    b = ops.strided_slice(ops.mul(d.b, ops.ones_like(d.c)), bg, en, st)
    if D is Box:
        return Box(c, b)
    E = None
    if d.e:
        pre = lambda sl: None if sl is None else [None] + list(sl)
        E = ops.strided_slice(_expand_gens(d.E, d.c), pre(bg), pre(en), pre(st))
    return HybridZonotope(c, b, E, d.e, d.origin)


def _lift_plain_hz(t):
    return HybridZonotope(t, ops.zeros_like(t), None, 0, 0)


def _lift_plain_box(t):
    return Box(t, ops.zeros_like(t))


def _t_concat(D, inputs, attrs):
    axis = attrs["axis"]
    if D is Box:
        parts = [v if is_abstract(v) else _lift_plain_box(v) for v in inputs]
        return Box(ops.concat([p.c for p in parts], axis),
                   ops.concat([ops.mul(p.b, ops.ones_like(p.c)) for p in parts], axis))
    parts = [v if is_abstract(v) else _lift_plain_hz(v) for v in inputs]
    c = ops.concat([p.c for p in parts], axis)
    b = ops.concat([ops.mul(p.b, ops.ones_like(p.c)) for p in parts], axis)
    zon = [p for p in parts if p.e]
    if not zon:
        return HybridZonotope(c, b, None, 0, 0)
    origins = {p.origin for p in zon}
    eaxis = _shift_axis(axis)
    if len(origins) == 1 and all(p.e == zon[0].e for p in zon):
        # shared coefficients: concatenate along the tensor axis, padding
        # generator-free blocks with zeros
        e = zon[0].e
        blocks = [_expand_gens(p.E, p.c) if p.e else _zero_gens(e, p.c) for p in parts]
        return HybridZonotope(c, b, ops.concat(blocks, eaxis), e, zon[0].origin)
    # independent coefficient systems: total generator count is the sum; each
    # element's stack occupies its own band of the new generator axis
    etot = sum(p.e for p in zon)
    rows = []
    before = 0
    for p in parts:
        col = []
        if before:
            col.append(_zero_gens(before, p.c))
        if p.e:
            col.append(_expand_gens(p.E, p.c))
            before += p.e
        after = etot - before
        if after:
            col.append(_zero_gens(after, p.c))
        rows.append(ops.concat(col, 0) if len(col) > 1 else col[0])
    return HybridZonotope(c, b, ops.concat(rows, eaxis), etot, fresh_origin())


def _t_pack(D, inputs, attrs):
    if D is not Box:
        raise UnsupportedOpError(OpKind.PACK, D)
    axis = attrs.get("axis", 0)
    parts = [v if is_abstract(v) else _lift_plain_box(v) for v in inputs]
    return Box(ops.pack([p.c for p in parts], axis),
               ops.pack([ops.mul(p.b, ops.ones_like(p.c)) for p in parts], axis))


def _t_select(D, inputs, attrs):
    mask, a, b = inputs
    if is_abstract(mask):
        raise UnsupportedOpError(OpKind.SELECT, D, "the condition input may not be abstract")
    if D is Box:
        pa = a if is_abstract(a) else _lift_plain_box(a)
        pb = b if is_abstract(b) else _lift_plain_box(b)
        return Box(ops.select(mask, pa.c, pb.c),
                   ops.select(mask, ops.mul(pa.b, ops.ones_like(pa.c)),
                              ops.mul(pb.b, ops.ones_like(pb.c))))
    pa = a if is_abstract(a) else _lift_plain_hz(a)
    pb = b if is_abstract(b) else _lift_plain_hz(b)
    c = ops.select(mask, pa.c, pb.c)
    bb = ops.select(mask, ops.mul(pa.b, ops.ones_like(pa.c)),
                    ops.mul(pb.b, ops.ones_like(pb.c)))
    if pa.e == 0 and pb.e == 0:
        return HybridZonotope(c, bb, None, 0, 0)
    if pa.e and pb.e and pa.origin == pb.origin:
        E = ops.select(mask, _expand_gens(pa.E, pa.c), _expand_gens(pb.E, pb.c))
        return HybridZonotope(c, bb, E, pa.e, pa.origin)
    blocks = []
    if pa.e:
        blocks.append(ops.select(mask, _expand_gens(pa.E, c), ops.mul(_expand_gens(pa.E, c), 0.0)))
    if pb.e:
        blocks.append(ops.select(mask, ops.mul(_expand_gens(pb.E, c), 0.0), _expand_gens(pb.E, c)))
    E = ops.concat(blocks, 0) if len(blocks) > 1 else blocks[0]
    etot = pa.e + pb.e
    origin = fresh_origin() if (pa.e and pb.e) else (pa.origin or pb.origin)
    return HybridZonotope(c, bb, E, etot, origin)


def _t_softmax(D, inputs, attrs):
    d = inputs[0]
    axis = attrs.get("axis", -1)
    lo, hi = _to_interval(d)
    _require_eager(OpKind.SOFTMAX, D, [lo, hi], "softmax")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), lo.shape)
    lo = np.moveaxis(lo, axis, -1)
    hi = np.moveaxis(hi, axis, -1)
    q = lo.shape[-1]
    eye = np.eye(q, dtype=bool)
    # worst/best-case softmax_j = 1 / (1 + sum_{k != j} exp(x_k - x_j)) with
    # opponents at their extremes; exact per-coordinate interval bounds
    dmax = np.where(eye, 0.0, np.exp(np.minimum(hi[..., None, :] - lo[..., :, None], 700.0))).sum(-1)
    dmin = np.where(eye, 0.0, np.exp(np.minimum(lo[..., None, :] - hi[..., :, None], 700.0))).sum(-1)
    l_out = np.moveaxis(1.0 / (1.0 + dmax), -1, axis)
    u_out = np.moveaxis(1.0 / (1.0 + dmin), -1, axis)
    return _from_interval(D, l_out, u_out)


def _t_none(D, inputs, attrs):
    return None


def _t_activation(kind):
    def t(D, inputs, attrs):
        from . import activations
        return activations.lift_activation(kind, inputs[0])
    return t


_DISPATCH = {
    OpKind.MATMUL: _t_matmul,
    OpKind.CONV2D: _t_conv2d,
    OpKind.BIAS_ADD: _t_bias_add,
    OpKind.ADD: _t_add,
    OpKind.SUB: _t_sub,
    OpKind.MUL: _t_mul,
    OpKind.REAL_DIV: _t_real_div,
    OpKind.NEG: _t_neg,
    OpKind.ABS: _t_activation(OpKind.ABS),
    OpKind.EXP: _t_activation(OpKind.EXP),
    OpKind.LOG: _t_activation(OpKind.LOG),
    OpKind.LOG1P: _t_activation(OpKind.LOG1P),
    OpKind.RELU: _t_activation(OpKind.RELU),
    OpKind.SIGMOID: _t_activation(OpKind.SIGMOID),
    OpKind.SOFTMAX: _t_softmax,
    OpKind.MAXIMUM: _t_extremum(OpKind.MAXIMUM),
    OpKind.MINIMUM: _t_extremum(OpKind.MINIMUM),
    OpKind.GREATER_EQUAL: _t_greater_equal,
    OpKind.MAX_POOL2: _t_max_pool2,
    OpKind.MEAN: _t_reduce(OpKind.MEAN),
    OpKind.SUM: _t_reduce(OpKind.SUM),
    OpKind.RESHAPE: _t_reshape,
    OpKind.TRANSPOSE: _t_transpose,
    OpKind.CONCAT: _t_concat,
    OpKind.STRIDED_SLICE: _t_strided_slice,
    OpKind.SHAPE: _t_none,
    OpKind.ONES_LIKE: _t_none,
    OpKind.ZEROS_LIKE: _t_none,
    OpKind.PACK: _t_pack,
    OpKind.SELECT: _t_select,
}


def transform_op(kind, inputs, attrs=None):
    """Abstract transformer dispatch: one (element | None) per op output.

    Inputs may mix domain elements and plain tensors; with no abstract
    input at all every output is None (the caller keeps concrete values).
    """
    kind = OpKind(kind)
    attrs = attrs or {}
    abstract = [v for v in inputs if is_abstract(v)]
    if not abstract:
        return [None]
    domains_seen = {type(v) for v in abstract}
    if len(domains_seen) > 1:
        raise UnsupportedOpError(kind, None, "mixing Box and HybridZonotope inputs")
    D = domains_seen.pop()
    if not supports(kind, D):
        raise UnsupportedOpError(kind, D)
    return [_DISPATCH[kind](D, list(inputs), attrs)]
