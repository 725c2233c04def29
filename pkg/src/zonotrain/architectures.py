"""Reference architectures and the model bundle they produce.

Six families: ffnn (five 100-node ReLU layers), convsmall / convmed (two
conv layers, VALID vs padding-1), convbig / convsuper (four conv layers
plus two 512-node dense layers), and skip (two conv branches concatenated
before a 200-node head — the one graph whose transform genuinely merges
two abstract elements).  convsmall_tiny is a scaled-down convsmall for
desk-scale runs on small images.

Weight init is seeded Glorot-uniform; biases start at zero.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .graph import Graph
from .training import Objective, attach_loss_head


@dataclass
class Model:
    """A built graph plus the tensor ids that make it usable."""
    graph: Graph
    x: int
    logits: int
    classes: int
    input_shape: tuple
    name: str = ""
    _head: tuple = field(default=None, repr=False, compare=False)

    def eval_head_parts(self):
        """(labels, ce_vec, ce_sum, ce_mean) ids, built once per model."""
        if self._head is None:
            self._head = attach_loss_head(self)
        return self._head

    def eval_head(self):
        y, ce_vec, ce_sum, ce_mean = self.eval_head_parts()
        return Objective(labels=y, ce_vec=ce_vec, ce_sum=ce_sum,
                         ce_mean=ce_mean, loss=ce_mean)

    def predict_logits(self, X):
        out, = self.graph.evaluate({self.x: np.asarray(X, dtype=np.float64)},
                                   [self.logits])
        return out

    def parameter_count(self):
        g = self.graph
        return int(sum(g.values[t].size for t in g.variables.values()))


class _Builder:
    """Tracks layer count and spatial dims while a net is assembled."""

    def __init__(self, g, rng):
        self.g = g
        self.rng = rng
        self.n_dense = 0
        self.n_conv = 0

    def _glorot(self, shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.rng.uniform(-limit, limit, size=shape)

    def dense(self, h, in_dim, out_dim, relu=True):
        i = self.n_dense
        self.n_dense += 1
        w = self.g.variable(f"dense{i}_w", self._glorot((in_dim, out_dim), in_dim, out_dim))
        b = self.g.variable(f"dense{i}_b", np.zeros(out_dim))
        h = ops.bias_add(ops.matmul(h, ops.Sym(self.g, w)), ops.Sym(self.g, b))
        return ops.relu(h) if relu else h

    def conv(self, h, hw, cin, cout, k, stride, padding):
        i = self.n_conv
        self.n_conv += 1
        kern = self.g.variable(
            f"conv{i}_k", self._glorot((k, k, cin, cout), k * k * cin, k * k * cout))
        b = self.g.variable(f"conv{i}_b", np.zeros(cout))
        h = ops.bias_add(ops.conv2d(h, ops.Sym(self.g, kern), stride, padding),
                         ops.Sym(self.g, b))
        pad = 1 if padding == "SAME" else 0
        out_hw = tuple((s + 2 * pad - k) // stride + 1 for s in hw)
        if min(out_hw) < 1:
            raise DimensionError(
                f"conv layer {i}: spatial dims {hw} too small for {k}x{k} stride {stride}")
        return ops.relu(h), out_hw

    def flatten(self, h, hw, c):
        d = hw[0] * hw[1] * c
        return ops.reshape(h, (-1, d)), d


def _require_image(input_shape):
    if len(input_shape) != 3:
        raise ConfigError(f"conv architectures need an HxWxC input shape, got {input_shape}")
    return input_shape


def _ffnn(b, x, input_shape, classes):
    d = int(np.prod(input_shape))
    h = ops.reshape(x, (-1, d))
    for _ in range(5):
        h = b.dense(h, d, 100)
        d = 100
    return b.dense(h, d, classes, relu=False)


def _conv_stack(b, x, input_shape, layers, padding):
    h, w, c = _require_image(input_shape)
    hw = (h, w)
    out = x
    for cout, k, stride in layers:
        out, hw = b.conv(out, hw, c, cout, k, stride, padding)
        c = cout
    return b.flatten(out, hw, c)


def _convsmall(b, x, input_shape, classes, padding="VALID", widths=(16, 32, 100),
               kernel=4):
    c1, c2, dense = widths
    h, d = _conv_stack(b, x, input_shape,
                       [(c1, kernel, 2), (c2, kernel, 2)], padding)
    h = b.dense(h, d, dense)
    return b.dense(h, dense, classes, relu=False)


def _convmed(b, x, input_shape, classes):
    return _convsmall(b, x, input_shape, classes, padding="SAME")


def _convsmall_tiny(b, x, input_shape, classes):
    return _convsmall(b, x, input_shape, classes, widths=(8, 16, 64), kernel=3)


def _convbig(b, x, input_shape, classes, padding="SAME",
             strides=(1, 2, 1, 2)):
    s1, s2, s3, s4 = strides
    h, d = _conv_stack(b, x, input_shape,
                       [(32, 3, s1), (32, 4, s2), (64, 3, s3), (64, 4, s4)],
                       padding)
    h = b.dense(h, d, 512)
    h = b.dense(h, 512, 512, relu=False)
    return b.dense(h, 512, classes, relu=False)


def _convsuper(b, x, input_shape, classes):
    return _convbig(b, x, input_shape, classes, padding="VALID",
                    strides=(1, 1, 1, 1))


def _skip(b, x, input_shape, classes):
    h1, d1 = _conv_stack(b, x, input_shape,
                         [(16, 3, 1), (16, 3, 1), (32, 3, 1)], "VALID")
    h1 = b.dense(h1, d1, 200, relu=False)
    h2, d2 = _conv_stack(b, x, input_shape,
                         [(32, 4, 1), (32, 4, 1)], "VALID")
    h2 = b.dense(h2, d2, 200, relu=False)
    h = ops.relu(ops.concat([h1, h2], axis=1))
    h = b.dense(h, 400, 200)
    return b.dense(h, 200, classes, relu=False)


_BUILDERS = {
    "ffnn": _ffnn,
    "convsmall": _convsmall,
    "convmed": _convmed,
    "convbig": _convbig,
    "convsuper": _convsuper,
    "skip": _skip,
    "convsmall_tiny": _convsmall_tiny,
}


def architecture_names():
    return sorted(_BUILDERS)


def build_architecture(name, input_shape, classes, seed=0):
    """Construct a named architecture as a fresh Model.

    ``input_shape`` is the per-example feature shape (channels last for the
    conv families).  Initialization is deterministic per seed.
    """
    key = str(name).lower().replace("-", "_")
    if key not in _BUILDERS:
        raise ConfigError(f"unknown architecture {name!r}; known: {architecture_names()}")
    input_shape = tuple(int(s) for s in input_shape)
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    g = Graph()
    x = g.placeholder((-1,) + input_shape, "x")
    rng = np.random.default_rng(seed)
    logits = _BUILDERS[key](_Builder(g, rng), ops.Sym(g, x), input_shape, classes)
    return Model(graph=g, x=x, logits=logits.tid, classes=int(classes),
                 input_shape=input_shape, name=key)
