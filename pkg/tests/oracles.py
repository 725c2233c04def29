"""Shared independent oracles and random-structure generators for the tests.

Everything here is deliberately written *against* the library's main code
paths: interval arithmetic by corner enumeration, gradients by central
finite differences, convolution by quadruple loop, and random graphs built
op by op.  The tests compare the package's answers to these.
"""

import numpy as np

from zonotrain import ops
from zonotrain.domains import (APPENDIX_TABLE, BOX_EXTENSIONS, Box,
                               HybridZonotope, bounds, fresh_origin, sample,
                               transform_op)
from zonotrain.graph import Graph
from zonotrain.tensor import OpKind, eval_op


# ---------------------------------------------------------------------------
# brute-force numerics


def conv2d_loop(x, k, stride, pad):
    """Reference cross-correlation: explicit quadruple loop."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    B, H, W, C = x.shape
    kh, kw, _, F = k.shape
    OH = (H - kh) // stride + 1
    OW = (W - kw) // stride + 1
    out = np.zeros((B, OH, OW, F))
    for b in range(B):
        for i in range(OH):
            for j in range(OW):
                patch = x[b, i * stride:i * stride + kh, j * stride:j * stride + kw, :]
                for f in range(F):
                    out[b, i, j, f] = np.sum(patch * k[:, :, :, f])
    return out


def maxpool2_loop(x):
    """Reference 2x2 stride-2 max pooling, odd tails dropped."""
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape[-3], x.shape[-2]
    OH, OW = H // 2, W // 2
    out = np.zeros(x.shape[:-3] + (OH, OW, x.shape[-1]))
    for i in range(OH):
        for j in range(OW):
            block = x[..., 2 * i:2 * i + 2, 2 * j:2 * j + 2, :]
            out[..., i, j, :] = block.max(axis=(-3, -2))
    return out


def box_vertices(lo, hi):
    """All corners of an interval box (flattened coordinates, p <= 16)."""
    lo = np.asarray(lo, dtype=np.float64).ravel()
    hi = np.asarray(hi, dtype=np.float64).ravel()
    p = lo.size
    corners = np.zeros((2 ** p, p))
    for mask in range(2 ** p):
        for j in range(p):
            corners[mask, j] = hi[j] if (mask >> j) & 1 else lo[j]
    return corners


def hz_sign_bounds(d):
    """Exact bounds of a HybridZonotope with b=0 by generator sign sweep."""
    c = np.asarray(d.c, dtype=np.float64)
    E = np.asarray(d.E, dtype=np.float64) if d.e else np.zeros((0,) + c.shape)
    lo = np.full(c.shape, np.inf)
    hi = np.full(c.shape, -np.inf)
    for mask in range(2 ** d.e):
        signs = np.array([1.0 if (mask >> k) & 1 else -1.0 for k in range(d.e)])
        pt = c + np.tensordot(signs, np.broadcast_to(E, (d.e,) + c.shape), axes=1)
        lo = np.minimum(lo, pt)
        hi = np.maximum(hi, pt)
    return lo, hi


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return np.max(np.abs(a - b)) / denom


# ---------------------------------------------------------------------------
# random domain elements


def random_box(rng, shape, scale=1.0):
    c = rng.normal(0.0, scale, shape)
    b = np.abs(rng.normal(0.0, 0.4 * scale, shape))
    return Box(c, b)


def random_hz(rng, shape, e=None, scale=1.0, origin=None):
    c = rng.normal(0.0, scale, shape)
    b = np.abs(rng.normal(0.0, 0.25 * scale, shape))
    if e is None:
        e = int(rng.integers(0, 4))
    if e == 0:
        return HybridZonotope(c, b, None, 0, 0)
    E = rng.normal(0.0, 0.3 * scale, (e,) + tuple(shape))
    return HybridZonotope(c, b, E, e, fresh_origin() if origin is None else origin)


def random_element(rng, domain, shape, **kw):
    if domain is Box:
        return random_box(rng, shape, kw.get("scale", 1.0))
    return random_hz(rng, shape, kw.get("e"), kw.get("scale", 1.0))


def shift_positive(d, margin=0.5):
    """Translate an element so its lower bound clears ``margin``."""
    lo = np.asarray(bounds(d).lower, dtype=np.float64)
    shift = np.maximum(margin - lo, 0.0)
    if isinstance(d, Box):
        return Box(np.asarray(d.c) + shift, d.b)
    return HybridZonotope(np.asarray(d.c) + shift, d.b, d.E, d.e, d.origin)


def containment_check(d_out, concrete_outputs, slack=1e-9):
    """Max violation of concrete outputs against the element's bounds."""
    ob = bounds(d_out)
    lo = np.asarray(ob.lower, dtype=np.float64)
    hi = np.asarray(ob.upper, dtype=np.float64)
    worst = 0.0
    for y in concrete_outputs:
        y = np.asarray(y, dtype=np.float64)
        worst = max(worst,
                    float(np.max(lo - y, initial=0.0)),
                    float(np.max(y - hi, initial=0.0)))
    assert worst <= slack, f"containment violated by {worst:.3e}"
    return worst


def hz_pair_same_origin(rng, shape, e=2, scale=1.0):
    o = fresh_origin()
    return (random_hz(rng, shape, e=e, scale=scale, origin=o),
            random_hz(rng, shape, e=e, scale=scale, origin=o))


def center_of(v):
    if isinstance(v, (Box, HybridZonotope)):
        return np.asarray(v.c, dtype=np.float64)
    return np.asarray(v, dtype=np.float64)


def sample_inputs(inputs, rng, n):
    """n concrete input tuples; abstract inputs sharing an origin share the
    generator coefficients (that correlation is the point of the tags)."""
    ws = {}
    cols = []
    for d in inputs:
        if not isinstance(d, (Box, HybridZonotope)):
            cols.append([np.asarray(d, dtype=np.float64)] * n)
            continue
        c = np.asarray(d.c, dtype=np.float64)
        b = np.broadcast_to(np.asarray(d.b, dtype=np.float64), c.shape)
        pts = c + rng.uniform(-1.0, 1.0, (n,) + c.shape) * b
        if isinstance(d, HybridZonotope) and d.e:
            if d.origin not in ws:
                ws[d.origin] = rng.uniform(-1.0, 1.0, (n, d.e))
            w = ws[d.origin]
            E = np.broadcast_to(np.asarray(d.E, dtype=np.float64),
                                (d.e,) + c.shape).reshape(d.e, -1)
            pts = pts + (w @ E).reshape((n,) + c.shape)
        cols.append(list(pts))
    return list(zip(*cols))


# ---------------------------------------------------------------------------
# op/domain soundness harness


def table_pairs(extended=False):
    """(OpKind, domain) pairs the dispatch claims to support."""
    pairs = []
    for kind in sorted(APPENDIX_TABLE, key=lambda k: k.value):
        box_ok, hz_ok, _ = APPENDIX_TABLE[kind]
        if box_ok or (extended and kind in BOX_EXTENSIONS):
            pairs.append((kind, Box))
        if hz_ok:
            pairs.append((kind, HybridZonotope))
    return pairs


def cases_for(kind, D, rng):
    """Randomized (inputs, attrs) cases honoring each op's preconditions."""
    K = OpKind

    def el(shape, **kw):
        return random_element(rng, D, shape, **kw)

    s2 = (int(rng.integers(2, 4)), int(rng.integers(2, 5)))
    if kind in (K.ADD, K.SUB, K.MUL):
        cases = [([el(s2), rng.normal(0, 1, s2)], {}),
                 ([rng.normal(0, 1, s2), el(s2)], {}),
                 ([el(s2), el(s2)], {})]
        if D is HybridZonotope:
            cases.append((list(hz_pair_same_origin(rng, s2)), {}))
        return cases
    if kind is K.BIAS_ADD:
        return [([el(s2), rng.normal(0, 1, (s2[1],))], {})]
    if kind is K.MATMUL:
        m, k, q = (int(rng.integers(1, 5)) for _ in range(3))
        return [([el((m, k)), rng.normal(0, 1, (k, q))], {})]
    if kind is K.CONV2D:
        C = int(rng.integers(1, 3))
        F = int(rng.integers(1, 3))
        return [
            ([el((1, 6, 6, C), scale=0.8), rng.normal(0, 0.6, (3, 3, C, F))],
             {"stride": 1, "padding": "VALID"}),
            ([el((1, 5, 5, C), scale=0.8), rng.normal(0, 0.6, (2, 2, C, F))],
             {"stride": 2, "padding": "VALID"}),
            ([el((2, 4, 4, C), scale=0.8), rng.normal(0, 0.6, (3, 3, C, F))],
             {"stride": 1, "padding": "SAME"}),
        ]
    if kind is K.GREATER_EQUAL:
        return [([el(s2), rng.normal(0, 1, s2)], {}),
                ([el(s2), el(s2)], {})]
    if kind is K.REAL_DIV:
        return [([el(s2), np.abs(rng.normal(0, 1, s2)) + 0.5], {}),
                ([el(s2), shift_positive(el(s2, scale=0.5), 0.5)], {})]
    if kind in (K.NEG, K.RELU, K.SIGMOID, K.ABS):
        return [([el(s2)], {})]
    if kind is K.EXP:
        return [([el(s2, scale=0.6)], {})]
    if kind is K.LOG:
        return [([shift_positive(el(s2), 0.3)], {})]
    if kind is K.LOG1P:
        return [([shift_positive(el(s2), -0.6)], {})]
    if kind is K.SOFTMAX:
        return [([el((2, 4))], {"axis": -1})]
    if kind in (K.MAXIMUM, K.MINIMUM):
        return [([el(s2), rng.normal(0, 1, s2)], {}),
                ([el(s2), el(s2)], {})]
    if kind is K.MAX_POOL2:
        C = int(rng.integers(1, 3))
        return [([el((1, 4, 6, C))], {}), ([el((2, 6, 4, C))], {})]
    if kind in (K.MEAN, K.SUM):
        return [([el((2, 3, 4))], {"axis": 1, "keepdims": False}),
                ([el((2, 3, 4))], {"axis": None, "keepdims": False}),
                ([el((2, 3, 4))], {"axis": 2, "keepdims": True})]
    if kind is K.RESHAPE:
        return [([el((2, 6))], {"shape": [3, 4]}),
                ([el((2, 6))], {"shape": [12]})]
    if kind is K.TRANSPOSE:
        return [([el((2, 3, 4))], {"perm": [2, 0, 1]}),
                ([el(s2)], {"perm": None})]
    if kind is K.STRIDED_SLICE:
        return [([el((4, 6))], {"begin": [1, 0], "end": [3, 5], "strides": [1, 2]}),
                ([el((4, 6))], {"begin": [0], "end": [2], "strides": None})]
    if kind is K.CONCAT:
        cases = [([el(s2), rng.normal(0, 1, s2)], {"axis": 0}),
                 ([el(s2), rng.normal(0, 1, s2), el(s2)], {"axis": 1})]
        if D is HybridZonotope:
            cases.append((list(hz_pair_same_origin(rng, s2)), {"axis": 0}))
        return cases
    if kind is K.PACK:
        return [([el(s2), rng.normal(0, 1, s2), el(s2)], {"axis": 0})]
    if kind is K.SELECT:
        mask = (rng.random(s2) < 0.5).astype(np.float64)
        cases = [([mask, el(s2), el(s2)], {}),
                 ([mask, el(s2), rng.normal(0, 1, s2)], {}),
                 ([mask, rng.normal(0, 1, s2), el(s2)], {})]
        if D is HybridZonotope:
            a, b = hz_pair_same_origin(rng, s2)
            cases.append(([mask, a, b], {}))
        return cases
    if kind in (K.SHAPE, K.ONES_LIKE, K.ZEROS_LIKE):
        return [([el(s2)], {})]
    raise AssertionError(f"no soundness case builder for {kind}")


def check_case_soundness(kind, inputs, attrs, rng, n, slack=1e-9):
    d_out = transform_op(kind, inputs, attrs)[0]
    concrete = [eval_op(kind, list(s), attrs)[0]
                for s in sample_inputs(inputs, rng, n)]
    if d_out is None:
        # shape-like ops: output must not depend on the point chosen
        ref = eval_op(kind, [center_of(v) for v in inputs], attrs)[0]
        for y in concrete:
            assert np.array_equal(np.asarray(y), np.asarray(ref))
        return 0.0
    return containment_check(d_out, concrete, slack)


def run_soundness_pair(kind, D, rng, total_samples=1000, slack=1e-9):
    """Max containment violation over randomized cases for one table pair."""
    cases = cases_for(kind, D, rng)
    n = -(-total_samples // len(cases))
    worst = 0.0
    for inputs, attrs in cases:
        worst = max(worst, check_case_soundness(kind, inputs, attrs, rng, n, slack))
    return worst


# ---------------------------------------------------------------------------
# random graphs (shared by the autodiff, transform, and acceptance suites)

# unary ops safe for finite differences once inputs clear kink margins
_SAFE_UNARY = [OpKind.NEG, OpKind.SIGMOID, OpKind.RELU, OpKind.ABS]


def _min_kink_margin(g, feeds, check_tensors):
    """Smallest distance of any Relu/Abs input to 0 and any Maximum/Minimum
    pair to a tie; finite differences need this to clear the step size."""
    if not check_tensors:
        return np.inf
    margin = np.inf
    _, values = g.forward(feeds, [t for t, _ in check_tensors])
    for t, kind in check_tensors:
        v = values[t]
        if kind in (OpKind.RELU, OpKind.ABS):
            margin = min(margin, float(np.min(np.abs(v))))
    return margin


def random_dense_graph(rng, depth=None, width_in=None, loss_head=True):
    """A random chain-with-diamonds graph over (1, d) tensors.

    Returns (graph, x_id, out_id, param_ids, feed_x, kink_tensors) where
    ``out_id`` is a scalar when loss_head else a (1, q) tensor.  Weights are
    stored as graph variables so both FD-vs-backprop and transform tests can
    reuse the same structures.
    """
    depth = int(rng.integers(3, 8)) if depth is None else depth
    d = int(rng.integers(3, 6)) if width_in is None else width_in
    g = Graph()
    x = g.placeholder((-1, d), "x")
    h = ops.Sym(g, x)
    kinks = []
    n_var = 0
    # post-relu tensors carry structurally exact zeros; a kink op applied to
    # one can never clear a finite-difference margin, so shift first
    zeroish = False

    def fresh_weight(shape, scale=0.7):
        nonlocal n_var
        v = g.variable(f"w{n_var}", rng.normal(0.0, scale, shape))
        n_var += 1
        return ops.Sym(g, v)

    def dekink(t):
        nonlocal zeroish
        if zeroish:
            t = ops.add(t, fresh_weight((1, d), scale=0.5))
            zeroish = False
        return t

    for _ in range(depth):
        choice = rng.choice(["matmul", "add", "mul", "unary", "diamond",
                             "slice", "affine"])
        if choice == "matmul":
            q = int(rng.integers(2, 6))
            h = ops.matmul(h, fresh_weight((d, q)))
            d = q
            zeroish = False
        elif choice == "add":
            h = ops.add(h, fresh_weight((1, d)))
            zeroish = False
        elif choice == "mul":
            h = ops.mul(h, fresh_weight((1, d), scale=0.5))
        elif choice == "affine":
            h = ops.bias_add(h, fresh_weight((d,)))
            zeroish = False
        elif choice == "slice":
            if d >= 3:
                keep = int(rng.integers(2, d))
                h = ops.strided_slice(h, [None, 0], [None, keep], None)
                d = keep
        elif choice == "diamond":
            h = dekink(h)
            a = ops.relu(h)
            kinks.append((a.tid, OpKind.RELU))
            b = ops.mul(h, 0.5)
            if rng.random() < 0.5:
                h = ops.add(a, b)
                zeroish = False
            else:
                h = ops.concat([a, b], 1)
                d = 2 * d
                zeroish = True
        else:
            kind = _SAFE_UNARY[int(rng.integers(0, len(_SAFE_UNARY)))]
            if kind is OpKind.NEG:
                h = ops.neg(h)
            elif kind is OpKind.SIGMOID:
                h = ops.sigmoid(h)
                zeroish = False
            elif kind is OpKind.RELU:
                h = dekink(h)
                h = ops.relu(h)
                kinks.append((h.tid, OpKind.RELU))
                zeroish = True
            else:
                h = dekink(h)
                h = ops.abs_(h)
                kinks.append((h.tid, OpKind.ABS))
                zeroish = True
    out = h
    if loss_head:
        out = ops.reduce_sum(ops.mul(h, h))   # smooth positive scalar head
    feed_x = rng.normal(0.0, 1.0, (1, g.infos[x].shape[1]))

    # check kink inputs, not outputs: Relu/Abs read their input tensor
    kink_inputs = []
    for t, kind in kinks:
        node = g.nodes[g.producer[t]]
        kink_inputs.append((node.inputs[0], kind))
    return g, x, out.tid, [g.variables[k] for k in sorted(g.variables)], feed_x, kink_inputs


def sample_clear_of_kinks(rng, g, x, feed_shape, kink_inputs, margin=1e-3,
                          tries=50):
    """Draw an input whose pre-kink values clear ``margin`` (FD validity)."""
    for _ in range(tries):
        feed = rng.normal(0.0, 1.0, feed_shape)
        if _min_kink_margin(g, {x: feed}, kink_inputs) > margin:
            return feed
    raise AssertionError("could not sample an input clear of activation kinks")
