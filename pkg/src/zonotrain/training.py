"""Robust training: combined loss assembly, Adam, PGD, and the metrics.

The combined objective is

    L_comb = CE(N(x), y) + lambda * CE(v, y) + l2 * sum ||theta||^2

where v is an adversarial logit vector read off the output bounds,
obtained by pushing the robustness property's initial element through
the model graph with the abstract transformers *symbolically* — the
robust term is just more graph, so the same reverse-mode engine trains
it.  Two adversary constructions are available:

* ``farthest_vertex`` (default): the output-box vertex farthest from the
  one-hot target, per coordinate the bound with the larger distance to
  the target entry (ties resolved to the upper bound).
* ``worst_corner``: the certification-margin corner — the true class at
  its lower bound against every other class at its upper bound.  This is
  the corner the verifier actually checks, so its cross-entropy pushes
  certified margins directly; the farthest vertex can sit at a very
  negative lower bound of a wrong class, which is easy to classify and
  gives a small loss while margins stay negative.

Metrics: test_error (clean misclassification %), pgd_error (clean-or-
attacked misclassification %, clean point always a candidate), and
verify_error (sound per-class worst-logit rate: true class at its lower
bound against every other class at its upper bound).  The farthest-vertex
misclassification rate is reported alongside as verify_vertex_error; it
never exceeds the per-class rate.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import backprop, forward_tape, gradient
from .domains import Box, HybridZonotope, bounds, get_adversary
from .errors import ConfigError, NumericError
from .properties import make_property
from .tensor import OpKind
from .transform import transform

DOMAINS = {"box": Box, "hybridzonotope": HybridZonotope}
ADVERSARY_KINDS = ("farthest_vertex", "worst_corner")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 50
    learning_rate: float = 1e-3
    lam: float = 0.1
    l2: float = 0.01
    epsilon: float = 0.1
    property_kind: str = "ball_demoted"
    property_params: dict = field(default_factory=dict)
    domain: str = "box"
    adversary_kind: str = "farthest_vertex"
    seed: int = 0
    pgd_steps: int = 20
    pgd_step_size: float = None
    lam_schedule: object = None   # optional epoch -> lambda override

    def validate(self):
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ConfigError("epochs must be >= 0 and batch_size positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be nonnegative")
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; known: {sorted(DOMAINS)}")
        if self.adversary_kind not in ADVERSARY_KINDS:
            raise ConfigError(f"unknown adversary_kind {self.adversary_kind!r}; "
                              f"known: {list(ADVERSARY_KINDS)}")
        if self.pgd_steps < 0:
            raise ConfigError("pgd_steps must be nonnegative")
        return self

    def make_property(self):
        return make_property(self.property_kind, self.epsilon, **self.property_params)


@dataclass
class Metrics:
    test_error: float
    pgd_error: float
    verify_error: float
    verify_vertex_error: float
    per_epoch: list = field(default_factory=list)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Objective:
    """Tensor ids of the assembled training objective."""
    labels: int          # one-hot float placeholder (N, classes)
    ce_vec: int          # per-example clean CE, shape (N, 1)
    ce_sum: int          # scalar sum of ce_vec (per-example input gradients)
    ce_mean: int         # scalar mean clean CE
    loss: int            # the combined scalar loss
    lam: int = None      # scalar lambda placeholder (robust branch only)
    ce_adv_mean: int = None
    reg: int = None


def one_hot(y, classes):
    y = np.asarray(y)
    out = np.zeros((y.size, classes))
    out[np.arange(y.size), y.astype(int)] = 1.0
    return out


def _ce_from_logits(logits, y1h, classes):
    """Per-example cross-entropy (N, 1) with in-graph log-sum-exp shift."""
    m = None
    for k in range(classes):
        sl = ops.strided_slice(logits, [None, k], [None, k + 1], None)
        m = sl if m is None else ops.maximum(m, sl)
    shifted = ops.sub(logits, m)
    lse = ops.add(ops.log(ops.reduce_sum(ops.exp(shifted), axis=1, keepdims=True)), m)
    true_logit = ops.reduce_sum(ops.mul(y1h, logits), axis=1, keepdims=True)
    return ops.sub(lse, true_logit)


def attach_loss_head(model):
    """Labels placeholder + clean CE tensors appended to the model graph."""
    g = model.graph
    y = g.placeholder((-1, model.classes), "labels_onehot")
    logits = ops.Sym(g, model.logits)
    ysym = ops.Sym(g, y)
    ce_vec = _ce_from_logits(logits, ysym, model.classes)
    ce_sum = ops.reduce_sum(ce_vec)
    ce_mean = ops.reduce_mean(ce_vec)
    return y, ce_vec.tid, ce_sum.tid, ce_mean.tid


def combined_loss(model, cfg, head=None):
    """Assemble the combined objective over the model graph.

    Returns an Objective; its ``loss`` field is the scalar loss tensor id.
    With lam == 0 and no schedule the robust branch is not built at all, so
    the objective *is* plain cross-entropy (+ regularization).
    """
    cfg.validate()
    g = model.graph
    if head is None:
        head = attach_loss_head(model)
    y, ce_vec, ce_sum, ce_mean = head
    loss = ops.Sym(g, ce_mean)
    obj = Objective(labels=y, ce_vec=ce_vec, ce_sum=ce_sum, ce_mean=ce_mean,
                    loss=None)
    robust = cfg.lam > 0 or cfg.lam_schedule is not None
    if robust:
        prop = cfg.make_property()
        D = DOMAINS[cfg.domain]
        d0 = prop.of(D, ops.Sym(g, model.x))
        dz, = transform(g, model.x, [model.logits], d0)
        ysym = ops.Sym(g, y)
        if cfg.adversary_kind == "farthest_vertex":
            adv = get_adversary(dz, ysym)
        else:
            ob = bounds(dz)
            adv = ops.add(ops.mul(ob.upper, ops.sub(ops.ones_like(ysym), ysym)),
                          ops.mul(ob.lower, ysym))
        ce_adv = _ce_from_logits(adv, ysym, model.classes)
        ce_adv_mean = ops.reduce_mean(ce_adv)
        lam = g.placeholder((), "lambda")
        loss = ops.add(loss, ops.mul(ops.Sym(g, lam), ce_adv_mean))
        obj.lam = lam
        obj.ce_adv_mean = ce_adv_mean.tid
    if cfg.l2 > 0:
        reg = None
        for name in sorted(g.variables):
            v = ops.Sym(g, g.variables[name])
            term = ops.reduce_sum(ops.mul(v, v))
            reg = term if reg is None else ops.add(reg, term)
        if reg is not None:
            reg = ops.mul(reg, cfg.l2)
            loss = ops.add(loss, reg)
            obj.reg = reg.tid
    obj.loss = loss.tid
    return obj


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One standard bias-corrected Adam update; pure in params and state."""
    t = state.get("t", 0) + 1
    m_s, v_s = state.get("m", {}), state.get("v", {})
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        grd = grads[k]
        m = beta1 * m_s.get(k, 0.0) + (1 - beta1) * grd
        v = beta2 * v_s.get(k, 0.0) + (1 - beta2) * grd * grd
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        new_p[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_p, {"t": t, "m": new_m, "v": new_v}


def pgd_attack(model, objective, X, Y1h, eps, steps=20, step_size=None,
               data_range=(0.0, 1.0)):
    """Signed-gradient ascent on the clean CE inside the eps sup-ball.

    Returns the per-example iterate of maximal loss; the clean point is
    always a candidate, so the result never has lower loss than X itself.
    """
    X = np.asarray(X, dtype=np.float64)
    if eps == 0 or steps == 0:
        return X.copy()
    if step_size is None:
        step_size = eps / 8
    lo, hi = X - eps, X + eps
    if data_range is not None:
        lo = np.maximum(lo, data_range[0])
        hi = np.minimum(hi, data_range[1])
    g, x = model.graph, model.x
    feeds = {objective.labels: Y1h}

    def losses(xa):
        out, = g.evaluate({x: xa, **feeds}, [objective.ce_vec])
        return out.reshape(-1)

    best_x = X.copy()
    best_l = losses(X)
    xa = X.copy()
    for _ in range(int(steps)):
        grads = gradient(g, objective.ce_sum, [x], {x: xa, **feeds})
        xa = np.clip(xa + step_size * np.sign(grads[x]), lo, hi)
        l = losses(xa)
        better = l > best_l
        best_x[better] = xa[better]
        best_l[better] = l[better]
    return best_x


def _verify_flags(model, X, y, cfg, prop=None):
    """(per-class susceptible, vertex-misclassified) boolean arrays."""
    g = model.graph
    prop = prop or cfg.make_property()
    D = DOMAINS[cfg.domain]
    d0 = prop.of(D, X)
    dz, = transform(g, model.x, [model.logits], d0)
    ob = bounds(dz)
    lo, hi = np.asarray(ob.lower), np.asarray(ob.upper)
    n = X.shape[0]
    idx = np.arange(n)
    l_true = lo[idx, y]
    u_other = hi.copy()
    u_other[idx, y] = -np.inf
    perclass = l_true <= u_other.max(axis=1)
    v = np.asarray(get_adversary(dz, one_hot(y, model.classes)))
    vertex = v.argmax(axis=1) != y
    if np.any(vertex & ~perclass):
        raise AssertionError("vertex-based susceptibility exceeded per-class bound")
    return perclass, vertex


def evaluate(model, data, cfg, objective=None, batch=256, verify_batch=128):
    """Test / PGD / Verify metrics over the dataset's test split."""
    cfg.validate()
    g = model.graph
    if objective is None:
        objective = model.eval_head()
    X, y = data.x_test, data.y_test
    prop = cfg.make_property()
    clean_wrong = np.zeros(len(y), dtype=bool)
    pgd_wrong = np.zeros(len(y), dtype=bool)
    for i in range(0, len(y), batch):
        Xb, yb = X[i:i + batch], y[i:i + batch]
        logits, = g.evaluate({model.x: Xb}, [model.logits])
        wrong = logits.argmax(axis=1) != yb
        clean_wrong[i:i + batch] = wrong
        if cfg.epsilon > 0 and cfg.pgd_steps > 0:
            xa = pgd_attack(model, objective, Xb, one_hot(yb, model.classes),
                            cfg.epsilon, cfg.pgd_steps, cfg.pgd_step_size,
                            data.data_range)
            la, = g.evaluate({model.x: xa}, [model.logits])
            pgd_wrong[i:i + batch] = wrong | (la.argmax(axis=1) != yb)
        else:
            pgd_wrong[i:i + batch] = wrong
    perclass = np.zeros(len(y), dtype=bool)
    vertex = np.zeros(len(y), dtype=bool)
    for i in range(0, len(y), verify_batch):
        pc, vx = _verify_flags(model, X[i:i + verify_batch], y[i:i + verify_batch],
                               cfg, prop)
        perclass[i:i + verify_batch] = pc
        vertex[i:i + verify_batch] = vx
    m = Metrics(
        test_error=float(100.0 * clean_wrong.mean()),
        pgd_error=float(100.0 * pgd_wrong.mean()),
        verify_error=float(100.0 * perclass.mean()),
        verify_vertex_error=float(100.0 * vertex.mean()),
    )
    assert m.test_error <= m.pgd_error + 1e-12
    if prop.contains_linf_ball():
        # PGD stays inside the ball, which the property concretization
        # contains, so soundness forces the ordering
        assert m.pgd_error <= m.verify_error + 1e-12
    return m


def train(model, data, cfg, objective=None, log=None):
    """Minibatch Adam over the combined loss; returns (Metrics, history).

    Deterministic given (seed, config, dataset).  History rows carry the
    per-epoch mean loss decomposition.
    """
    cfg.validate()
    g = model.graph
    if objective is None:
        objective = combined_loss(model, cfg, head=model.eval_head_parts())
    rng = np.random.default_rng(cfg.seed)
    var_ids = [g.variables[k] for k in sorted(g.variables)]
    state = {}
    X, y = data.x_train, data.y_train
    n = len(y)
    history = []
    trace = []
    for epoch in range(cfg.epochs):
        lam = cfg.lam if cfg.lam_schedule is None else float(cfg.lam_schedule(epoch))
        perm = rng.permutation(n)
        sums = {"loss": 0.0, "ce_clean": 0.0, "ce_adv": 0.0, "reg": 0.0}
        nb = 0
        for i in range(0, n, cfg.batch_size):
            sel = perm[i:i + cfg.batch_size]
            feeds = {model.x: X[sel], objective.labels: one_hot(y[sel], model.classes)}
            if objective.lam is not None:
                feeds[objective.lam] = lam
            tape = forward_tape(g, feeds, [objective.loss])
            lval = float(tape.values[objective.loss])
            trace.append(lval)
            if not np.isfinite(lval):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {nb}: {lval!r}; "
                    f"recent losses: {[round(t, 6) for t in trace[-6:]]}")
            grads = backprop(g, tape, objective.loss, var_ids)
            params = {v: g.values[v] for v in var_ids}
            params, state = adam_step(params, grads, state, cfg.learning_rate)
            for v, val in params.items():
                g.set_variable(v, val)
            sums["loss"] += lval
            sums["ce_clean"] += float(tape.values[objective.ce_mean])
            if objective.ce_adv_mean is not None:
                sums["ce_adv"] += float(tape.values[objective.ce_adv_mean])
            if objective.reg is not None:
                sums["reg"] += float(tape.values[objective.reg])
            nb += 1
        row = {"epoch": epoch, "lam": lam}
        row.update({k: v / max(nb, 1) for k, v in sums.items()})
        history.append(row)
        if log:
            log(row)
    metrics = evaluate(model, data, cfg)
    metrics.per_epoch = history
    return metrics, history
