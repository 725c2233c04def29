"""Concrete tensor semantics: the op vocabulary and its float64 kernels.

Every op the graph IR can hold is listed in :class:`OpKind`; ``eval_op``
gives the reference (eager) semantics used both by direct graph evaluation
and by the eager path of the abstract domain transformers.

Conventions:
  * everything is float64; kernels coerce their inputs,
  * images are channels-last ``(..., H, W, C)`` with kernels ``(kh, kw, C, F)``,
  * pointwise binaries follow numpy broadcasting (trailing-axis alignment),
  * MatMul and Conv2D accept arbitrary leading batch axes, which is what lets
    stacked zonotope generators ride through them unchanged.
"""

import enum

import numpy as np

from .errors import DimensionError, DomainError


class OpKind(enum.Enum):
    MATMUL = "MatMul"
    CONV2D = "Conv2D"
    BIAS_ADD = "BiasAdd"
    ADD = "Add"
    SUB = "Sub"
    MUL = "Mul"
    REAL_DIV = "RealDiv"
    NEG = "Neg"
    ABS = "Abs"
    EXP = "Exp"
    LOG = "Log"
    LOG1P = "Log1p"
    RELU = "Relu"
    SIGMOID = "Sigmoid"
    SOFTMAX = "Softmax"
    MAXIMUM = "Maximum"
    MINIMUM = "Minimum"
    GREATER_EQUAL = "GreaterEqual"
    MAX_POOL2 = "MaxPool2"
    MEAN = "Mean"
    SUM = "Sum"
    RESHAPE = "Reshape"
    TRANSPOSE = "Transpose"
    CONCAT = "ConcatV2"
    STRIDED_SLICE = "StridedSlice"
    SHAPE = "Shape"
    ONES_LIKE = "OnesLike"
    ZEROS_LIKE = "ZerosLike"
    PACK = "Pack"
    SELECT = "Select"


# Closed attribute sets per kind; anything else is rejected at graph build.
ATTR_KEYS = {
    OpKind.CONV2D: {"stride", "padding"},
    OpKind.SOFTMAX: {"axis"},
    OpKind.MEAN: {"axis", "keepdims"},
    OpKind.SUM: {"axis", "keepdims"},
    OpKind.RESHAPE: {"shape"},
    OpKind.TRANSPOSE: {"perm"},
    OpKind.CONCAT: {"axis"},
    OpKind.STRIDED_SLICE: {"begin", "end", "strides"},
    OpKind.PACK: {"axis"},
}

ARITY = {
    OpKind.MATMUL: 2, OpKind.CONV2D: 2, OpKind.BIAS_ADD: 2, OpKind.ADD: 2,
    OpKind.SUB: 2, OpKind.MUL: 2, OpKind.REAL_DIV: 2, OpKind.NEG: 1,
    OpKind.ABS: 1, OpKind.EXP: 1, OpKind.LOG: 1, OpKind.LOG1P: 1,
    OpKind.RELU: 1, OpKind.SIGMOID: 1, OpKind.SOFTMAX: 1, OpKind.MAXIMUM: 2,
    OpKind.MINIMUM: 2, OpKind.GREATER_EQUAL: 2, OpKind.MAX_POOL2: 1,
    OpKind.MEAN: 1, OpKind.SUM: 1, OpKind.RESHAPE: 1, OpKind.TRANSPOSE: 1,
    OpKind.CONCAT: None,  # variadic, >= 1
    OpKind.STRIDED_SLICE: 1, OpKind.SHAPE: 1, OpKind.ONES_LIKE: 1,
    OpKind.ZEROS_LIKE: 1, OpKind.PACK: None, OpKind.SELECT: 3,
}


def _f64(x):
    return np.asarray(x, dtype=np.float64)


def matmul(a, b):
    a, b = _f64(a), _f64(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"MatMul needs rank>=2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"MatMul inner dims differ: {a.shape} @ {b.shape}")
    try:
        return np.matmul(a, b)
    except ValueError as exc:
        raise DimensionError(f"MatMul batch dims incompatible: {a.shape} @ {b.shape}") from exc


def _pad_amount(padding):
    if padding == "VALID":
        return 0
    if padding == "SAME":
        return 1  # fixed 1-pixel border, the only padded mode we use
    raise DimensionError(f"unknown padding mode {padding!r}")


def _im2col(x, kh, kw, stride, pad):
    """(B, H, W, C) -> (B, OH, OW, kh*kw*C) patch matrix (copies)."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    B, H, W, C = x.shape
    OH = (H - kh) // stride + 1
    OW = (W - kw) // stride + 1
    if OH <= 0 or OW <= 0:
        raise DimensionError(f"Conv2D kernel {kh}x{kw} larger than padded input {H}x{W}")
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (B, OH, OW, kh, kw, C), (s0, s1 * stride, s2 * stride, s1, s2, s3))
    return np.ascontiguousarray(view).reshape(B, OH, OW, kh * kw * C)


def conv2d(x, k, stride, padding):
    x, k = _f64(x), _f64(k)
    if x.ndim < 4:
        raise DimensionError(f"Conv2D input must be (..., H, W, C), got shape {x.shape}")
    if k.ndim != 4:
        raise DimensionError(f"Conv2D kernel must be (kh, kw, C, F), got shape {k.shape}")
    kh, kw, kc, F = k.shape
    if kc != x.shape[-1]:
        raise DimensionError(f"Conv2D channel mismatch: input {x.shape[-1]}, kernel {kc}")
    lead = x.shape[:-3]
    xb = x.reshape((-1,) + x.shape[-3:])
    cols = _im2col(xb, kh, kw, int(stride), _pad_amount(padding))
    out = cols @ k.reshape(kh * kw * kc, F)
    return out.reshape(lead + out.shape[1:])


def conv2d_backward(x_shape, k, stride, padding, dout):
    """Gradient of conv2d w.r.t. its input, for a fixed kernel."""
    k = _f64(k)
    kh, kw, kc, F = k.shape
    pad = _pad_amount(padding)
    stride = int(stride)
    lead = x_shape[:-3]
    H, W, C = x_shape[-3:]
    dout = _f64(dout).reshape((-1,) + dout.shape[len(lead):])
    B, OH, OW, _ = dout.shape
    dcols = dout @ k.reshape(kh * kw * kc, F).T
    d6 = dcols.reshape(B, OH, OW, kh, kw, C)
    dx = np.zeros((B, H + 2 * pad, W + 2 * pad, C))
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + stride * OH:stride, j:j + stride * OW:stride, :] += d6[:, :, :, i, j, :]
    if pad:
        dx = dx[:, pad:-pad, pad:-pad, :]
    return dx.reshape(x_shape)


def conv2d_kernel_grad(x, k_shape, stride, padding, dout):
    """Gradient of conv2d w.r.t. the kernel, for a fixed input."""
    x = _f64(x)
    kh, kw, kc, F = k_shape
    xb = x.reshape((-1,) + x.shape[-3:])
    cols = _im2col(xb, kh, kw, int(stride), _pad_amount(padding))
    dout = _f64(dout).reshape(-1, F)
    dk = cols.reshape(-1, kh * kw * kc).T @ dout
    return dk.reshape(k_shape)


def bias_add(x, b):
    x, b = _f64(x), _f64(b)
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"BiasAdd needs 1-D bias matching last axis: {x.shape} + {b.shape}")
    return x + b


def _broadcast_binary(f, name):
    def op(a, b):
        a, b = _f64(a), _f64(b)
        try:
            return f(a, b)
        except ValueError as exc:
            raise DimensionError(f"{name} broadcast failed: {a.shape} vs {b.shape}") from exc
    return op


add = _broadcast_binary(np.add, "Add")
sub = _broadcast_binary(np.subtract, "Sub")
mul = _broadcast_binary(np.multiply, "Mul")
maximum = _broadcast_binary(np.maximum, "Maximum")
minimum = _broadcast_binary(np.minimum, "Minimum")


def real_div(a, b):
    a, b = _f64(a), _f64(b)
    if np.any(b == 0.0):
        raise DomainError("RealDiv by zero")
    try:
        return a / b
    except ValueError as exc:
        raise DimensionError(f"RealDiv broadcast failed: {a.shape} vs {b.shape}") from exc


def neg(x):
    return -_f64(x)


def abs_(x):
    return np.abs(_f64(x))


def exp(x):
    return np.exp(_f64(x))


def log(x):
    x = _f64(x)
    if np.any(x <= 0.0):
        raise DomainError("Log of non-positive value")
    return np.log(x)


def log1p(x):
    x = _f64(x)
    if np.any(x <= -1.0):
        raise DomainError("Log1p of value <= -1")
    return np.log1p(x)


def relu(x):
    return np.maximum(_f64(x), 0.0)


def sigmoid(x):
    x = _f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    x = _f64(x)
    z = x - np.max(x, axis=axis, keepdims=True)
    ez = np.exp(z)
    return ez / np.sum(ez, axis=axis, keepdims=True)


def greater_equal(a, b):
    a, b = _f64(a), _f64(b)
    try:
        return (a >= b).astype(np.float64)
    except ValueError as exc:
        raise DimensionError(f"GreaterEqual broadcast failed: {a.shape} vs {b.shape}") from exc


def _pool_slices(x):
    """Four stacked 2x2-offset slices of (..., H, W, C); odd tails dropped."""
    H, W = x.shape[-3], x.shape[-2]
    h2, w2 = (H // 2) * 2, (W // 2) * 2
    x = x[..., :h2, :w2, :]
    return np.stack([x[..., 0::2, 0::2, :], x[..., 0::2, 1::2, :],
                     x[..., 1::2, 0::2, :], x[..., 1::2, 1::2, :]])


def max_pool2(x):
    x = _f64(x)
    if x.ndim < 3:
        raise DimensionError(f"MaxPool2 input must be (..., H, W, C), got shape {x.shape}")
    return _pool_slices(x).max(axis=0)


def max_pool2_backward(x, dout):
    x = _f64(x)
    cand = _pool_slices(x)
    arg = cand.argmax(axis=0)  # first max wins on ties
    dx = np.zeros_like(x)
    H, W = x.shape[-3], x.shape[-2]
    h2, w2 = (H // 2) * 2, (W // 2) * 2
    views = [dx[..., 0:h2:2, 0:w2:2, :], dx[..., 0:h2:2, 1:w2:2, :],
             dx[..., 1:h2:2, 0:w2:2, :], dx[..., 1:h2:2, 1:w2:2, :]]
    for i, v in enumerate(views):
        v += np.where(arg == i, dout, 0.0)
    return dx


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, (list, tuple)):
        return tuple(int(a) % ndim for a in axis)
    return int(axis) % ndim


def reduce_mean(x, axis=None, keepdims=False):
    x = _f64(x)
    return np.mean(x, axis=_norm_axis(axis, x.ndim), keepdims=bool(keepdims))


def reduce_sum(x, axis=None, keepdims=False):
    x = _f64(x)
    return np.sum(x, axis=_norm_axis(axis, x.ndim), keepdims=bool(keepdims))


def reshape(x, shape):
    x = _f64(x)
    try:
        return x.reshape(tuple(int(s) for s in shape))
    except ValueError as exc:
        raise DimensionError(f"Reshape {x.shape} -> {tuple(shape)} impossible") from exc


def transpose(x, perm=None):
    x = _f64(x)
    if perm is not None:
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(x.ndim)):
            raise DimensionError(f"Transpose perm {perm} invalid for rank {x.ndim}")
    return np.transpose(x, perm)


def concat(xs, axis):
    xs = [_f64(x) for x in xs]
    try:
        return np.concatenate(xs, axis=int(axis))
    except ValueError as exc:
        raise DimensionError(f"ConcatV2 shape mismatch: {[x.shape for x in xs]}") from exc


def slices_from_attrs(begin, end, strides, ndim):
    begin = list(begin or [])
    end = list(end or [])
    strides = list(strides or [])
    n = max(len(begin), len(end), len(strides))
    if n > ndim:
        raise DimensionError(f"StridedSlice spec rank {n} exceeds tensor rank {ndim}")
    out = []
    for i in range(ndim):
        b = begin[i] if i < len(begin) else None
        e = end[i] if i < len(end) else None
        s = strides[i] if i < len(strides) else None
        out.append(slice(b if b is None else int(b),
                         e if e is None else int(e),
                         s if s is None else int(s)))
    return tuple(out)


def strided_slice(x, begin, end, strides):
    x = _f64(x)
    out = x[slices_from_attrs(begin, end, strides, x.ndim)]
    if out.size == 0:
        raise DimensionError(f"StridedSlice produced empty result on shape {x.shape}")
    return out


def shape_of(x):
    return np.asarray(np.shape(x), dtype=np.float64)


def ones_like(x):
    return np.ones_like(_f64(x))


def zeros_like(x):
    return np.zeros_like(_f64(x))


def pack(xs, axis):
    xs = [_f64(x) for x in xs]
    try:
        return np.stack(xs, axis=int(axis))
    except ValueError as exc:
        raise DimensionError(f"Pack shape mismatch: {[x.shape for x in xs]}") from exc


def select(mask, a, b):
    mask, a, b = _f64(mask), _f64(a), _f64(b)
    try:
        return np.where(mask != 0.0, a, b)
    except ValueError as exc:
        raise DimensionError(
            f"Select broadcast failed: {mask.shape}, {a.shape}, {b.shape}") from exc


def eval_op(kind, inputs, attrs=None):
    """Reference semantics: list of inputs -> list of outputs (all length-1)."""
    attrs = attrs or {}
    arity = ARITY[kind]
    if arity is not None and len(inputs) != arity:
        raise DimensionError(f"{kind.value} expects {arity} inputs, got {len(inputs)}")
    if kind is OpKind.MATMUL:
        out = matmul(*inputs)
    elif kind is OpKind.CONV2D:
        out = conv2d(inputs[0], inputs[1], attrs["stride"], attrs["padding"])
    elif kind is OpKind.BIAS_ADD:
        out = bias_add(*inputs)
    elif kind is OpKind.ADD:
        out = add(*inputs)
    elif kind is OpKind.SUB:
        out = sub(*inputs)
    elif kind is OpKind.MUL:
        out = mul(*inputs)
    elif kind is OpKind.REAL_DIV:
        out = real_div(*inputs)
    elif kind is OpKind.NEG:
        out = neg(inputs[0])
    elif kind is OpKind.ABS:
        out = abs_(inputs[0])
    elif kind is OpKind.EXP:
        out = exp(inputs[0])
    elif kind is OpKind.LOG:
        out = log(inputs[0])
    elif kind is OpKind.LOG1P:
        out = log1p(inputs[0])
    elif kind is OpKind.RELU:
        out = relu(inputs[0])
    elif kind is OpKind.SIGMOID:
        out = sigmoid(inputs[0])
    elif kind is OpKind.SOFTMAX:
        out = softmax(inputs[0], attrs.get("axis", -1))
    elif kind is OpKind.MAXIMUM:
        out = maximum(*inputs)
    elif kind is OpKind.MINIMUM:
        out = minimum(*inputs)
    elif kind is OpKind.GREATER_EQUAL:
        out = greater_equal(*inputs)
    elif kind is OpKind.MAX_POOL2:
        out = max_pool2(inputs[0])
    elif kind is OpKind.MEAN:
        out = reduce_mean(inputs[0], attrs.get("axis"), attrs.get("keepdims", False))
    elif kind is OpKind.SUM:
        out = reduce_sum(inputs[0], attrs.get("axis"), attrs.get("keepdims", False))
    elif kind is OpKind.RESHAPE:
        out = reshape(inputs[0], attrs["shape"])
    elif kind is OpKind.TRANSPOSE:
        out = transpose(inputs[0], attrs.get("perm"))
    elif kind is OpKind.CONCAT:
        out = concat(inputs, attrs["axis"])
    elif kind is OpKind.STRIDED_SLICE:
        out = strided_slice(inputs[0], attrs.get("begin"), attrs.get("end"),
                            attrs.get("strides"))
    elif kind is OpKind.SHAPE:
        out = shape_of(inputs[0])
    elif kind is OpKind.ONES_LIKE:
        out = ones_like(inputs[0])
    elif kind is OpKind.ZEROS_LIKE:
        out = zeros_like(inputs[0])
    elif kind is OpKind.PACK:
        out = pack(inputs, attrs.get("axis", 0))
    elif kind is OpKind.SELECT:
        out = select(*inputs)
    else:  # pragma: no cover
        raise NotImplementedError(kind)
    return [out]
