"""Loss heads, Adam, PGD, metric evaluation, and the training loop."""

import numpy as np
import pytest

from oracles import fd_gradient, rel_err
from zonotrain import ops
from zonotrain.architectures import Model, build_architecture
from zonotrain.autodiff import gradient
from zonotrain.errors import ConfigError, NumericError
from zonotrain.graph import Graph
from zonotrain.model_io import Dataset, synth_blobs
from zonotrain.training import (ADVERSARY_KINDS, TrainConfig, adam_step,
                                combined_loss, evaluate, one_hot, pgd_attack,
                                train)


def _tiny_model(rng, din=4, hidden=5, classes=3):
    g = Graph()
    x = g.placeholder((-1, din), "x")
    w1 = g.variable("w1", rng.normal(0, 0.8, (din, hidden)))
    b1 = g.variable("b1", rng.normal(0, 0.2, (hidden,)))
    w2 = g.variable("w2", rng.normal(0, 0.8, (hidden, classes)))
    h = ops.relu(ops.bias_add(ops.matmul(ops.Sym(g, x), ops.Sym(g, w1)),
                              ops.Sym(g, b1)))
    logits = ops.matmul(h, ops.Sym(g, w2))
    return Model(g, x, logits.tid, classes, (din,), "tiny")


def _manual_ce(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1)) + logits.max(axis=1)
    return lse - logits[np.arange(len(labels)), labels]


def test_one_hot():
    oh = one_hot(np.array([0, 2, 1]), 3)
    assert np.array_equal(oh, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_cross_entropy_head_matches_manual_logsumexp():
    rng = np.random.default_rng(31)
    model = _tiny_model(rng)
    obj = model.eval_head()
    X = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, 6)
    logits = model.predict_logits(X)
    vec, mean = model.graph.evaluate(
        {model.x: X, obj.labels: one_hot(y, 3)}, [obj.ce_vec, obj.ce_mean])
    want = _manual_ce(logits, y)
    assert np.allclose(vec.ravel(), want, atol=1e-10)
    assert abs(mean - want.mean()) < 1e-10


def test_lam_zero_loss_is_clean_ce_plus_regularizer():
    rng = np.random.default_rng(32)
    model = _tiny_model(rng)
    cfg = TrainConfig(lam=0.0, l2=0.01, epsilon=0.1)
    obj = combined_loss(model, cfg)
    assert obj.ce_adv_mean is None
    X = rng.normal(size=(5, 4))
    y1h = one_hot(rng.integers(0, 3, 5), 3)
    loss, ce_mean, reg = model.graph.evaluate(
        {model.x: X, obj.labels: y1h}, [obj.loss, obj.ce_mean, obj.reg])
    want_reg = 0.01 * sum(np.sum(model.graph.values[t] ** 2)
                          for t in model.graph.variables.values())
    assert abs(reg - want_reg) < 1e-12
    assert abs(loss - (ce_mean + reg)) < 1e-12


@pytest.mark.parametrize("domain", ["box", "hybridzonotope"])
@pytest.mark.parametrize("adversary", ADVERSARY_KINDS)
def test_zero_radius_robust_loss_collapses_to_clean(domain, adversary):
    rng = np.random.default_rng(33)
    model = _tiny_model(rng)
    lam = 0.4
    cfg = TrainConfig(lam=lam, l2=0.01, epsilon=0.0, domain=domain,
                      adversary_kind=adversary)
    obj = combined_loss(model, cfg)
    X = rng.normal(size=(5, 4))
    y1h = one_hot(rng.integers(0, 3, 5), 3)
    loss, ce_mean, reg = model.graph.evaluate(
        {model.x: X, obj.labels: y1h, obj.lam: lam},
        [obj.loss, obj.ce_mean, obj.reg])
    assert abs(loss - ((1 + lam) * ce_mean + reg)) < 1e-10


@pytest.mark.parametrize("domain", ["box", "hybridzonotope"])
@pytest.mark.parametrize("adversary", ADVERSARY_KINDS)
def test_robust_loss_gradients_match_central_differences(domain, adversary):
    rng = np.random.default_rng(34)
    model = _tiny_model(rng)
    cfg = TrainConfig(lam=0.3, l2=0.01, epsilon=0.05, domain=domain,
                      adversary_kind=adversary)
    obj = combined_loss(model, cfg)
    X = rng.normal(size=(3, 4))
    y1h = one_hot(rng.integers(0, 3, 3), 3)
    g = model.graph
    feeds = {model.x: X, obj.labels: y1h, obj.lam: cfg.lam}
    params = sorted(g.variables.values())
    grads = gradient(g, obj.loss, params, feeds)
    for p in params:
        def f(v, _p=p):
            old = g.values[_p]
            g.values[_p] = v
            try:
                return float(g.evaluate(feeds, [obj.loss])[0])
            finally:
                g.values[_p] = old
        assert rel_err(grads[p], fd_gradient(f, g.values[p].copy())) <= 1e-4


def test_adam_zero_gradient_leaves_parameters():
    params = {0: np.array([1.0, -2.0])}
    grads = {0: np.zeros(2)}
    state = {}
    for _ in range(3):
        params, state = adam_step(params, grads, state, lr=0.1)
    assert np.array_equal(params[0], [1.0, -2.0])


def test_adam_single_step_closed_form():
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    g0 = np.array([0.3, -2.0])
    params = {0: np.zeros(2)}
    new, state = adam_step(params, {0: g0}, {}, lr, b1, b2, eps)
    mhat = (1 - b1) * g0 / (1 - b1)
    vhat = (1 - b2) * g0 ** 2 / (1 - b2)
    want = -lr * mhat / (np.sqrt(vhat) + eps)
    assert np.allclose(new[0], want, atol=1e-15)
    assert state["t"] == 1


def test_adam_constant_gradient_step_size_approaches_lr():
    g0 = np.array([0.5])
    params = {0: np.array([0.0])}
    state = {}
    prev = params[0].copy()
    for _ in range(50):
        params, state = adam_step(params, {0: g0}, state, lr=0.01)
    step = np.abs(params[0] - prev) / 50
    assert abs(step[0] - 0.01) < 1e-3


def test_pgd_zero_radius_and_zero_steps_return_input():
    rng = np.random.default_rng(35)
    model = _tiny_model(rng)
    obj = model.eval_head()
    X = rng.uniform(0.2, 0.8, (4, 4))
    y1h = one_hot(rng.integers(0, 3, 4), 3)
    out = pgd_attack(model, obj, X, y1h, eps=0.0)
    assert np.array_equal(out, X) and out is not X
    out = pgd_attack(model, obj, X, y1h, eps=0.1, steps=0)
    assert np.array_equal(out, X)


def test_pgd_single_step_is_signed_gradient_ascent():
    rng = np.random.default_rng(36)
    model = _tiny_model(rng)
    obj = model.eval_head()
    X = rng.uniform(0.3, 0.7, (2, 4))
    y1h = one_hot(rng.integers(0, 3, 2), 3)
    eps = 0.05
    grads = gradient(model.graph, obj.ce_sum, [model.x],
                     {model.x: X, obj.labels: y1h})
    want = np.clip(X + eps * np.sign(grads[model.x]), 0.0, 1.0)
    got = pgd_attack(model, obj, X, y1h, eps, steps=1, step_size=eps)
    # candidate rule: the step is kept only where it raises the loss
    ce = lambda A: model.graph.evaluate(
        {model.x: A, obj.labels: y1h}, [obj.ce_vec])[0].ravel()
    keep = ce(want) > ce(X)
    assert np.array_equal(got[keep], want[keep])
    assert np.array_equal(got[~keep], X[~keep])


def test_pgd_stays_in_ball_and_range():
    rng = np.random.default_rng(37)
    model = _tiny_model(rng)
    obj = model.eval_head()
    X = rng.uniform(0.0, 1.0, (8, 4))
    y1h = one_hot(rng.integers(0, 3, 8), 3)
    adv = pgd_attack(model, obj, X, y1h, eps=0.07, steps=10)
    assert np.max(np.abs(adv - X)) <= 0.07 + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_pgd_never_decreases_loss():
    rng = np.random.default_rng(38)
    model = _tiny_model(rng)
    obj = model.eval_head()
    X = rng.uniform(0.0, 1.0, (16, 4))
    y = rng.integers(0, 3, 16)
    y1h = one_hot(y, 3)
    adv = pgd_attack(model, obj, X, y1h, eps=0.1, steps=5)
    g = model.graph
    ce0 = g.evaluate({model.x: X, obj.labels: y1h}, [obj.ce_vec])[0]
    ce1 = g.evaluate({model.x: adv, obj.labels: y1h}, [obj.ce_vec])[0]
    assert np.all(ce1 >= ce0 - 1e-12)


def _blobs(seed=0, n=40, classes=3, dim=6, separation=6.0):
    return synth_blobs(seed, n, classes, dim, separation)


def test_evaluate_zero_radius_makes_all_errors_equal():
    rng = np.random.default_rng(39)
    model = _tiny_model(rng, din=6)
    data = _blobs()
    cfg = TrainConfig(epsilon=0.0, lam=0.0)
    m = evaluate(model, data, cfg)
    assert m.test_error == m.pgd_error == m.verify_error


def test_evaluate_certifies_wide_margin_linear_model():
    # a fixed linear separator with huge margins verifies everything
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    w = g.variable("w", np.array([[100.0, -100.0], [-100.0, 100.0]]))
    logits = ops.matmul(ops.Sym(g, x), ops.Sym(g, w))
    model = Model(g, x, logits.tid, 2, (2,), "linear")
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.1, 0.8]])
    y = np.array([0, 1, 0, 1])
    data = Dataset(X, y, X, y, classes=2, data_range=None, name="toy")
    cfg = TrainConfig(epsilon=0.01, lam=0.0)
    m = evaluate(model, data, cfg)
    assert m.test_error == 0.0 and m.verify_error == 0.0
    assert m.test_error <= m.pgd_error <= m.verify_error


def test_metric_ordering_holds_after_training():
    data = _blobs()
    model = build_architecture("ffnn", (6,), 3, seed=1)
    cfg = TrainConfig(epochs=3, batch_size=16, lam=0.0, epsilon=0.05, seed=1)
    metrics, history = train(model, data, cfg)
    assert metrics.test_error <= metrics.pgd_error <= metrics.verify_error
    assert len(history) == 3
    assert {"epoch", "lam", "loss", "ce_clean", "ce_adv", "reg"} <= set(history[0])


def test_training_fits_separable_blobs():
    data = _blobs(seed=3)
    model = build_architecture("ffnn", (6,), 3, seed=3)
    cfg = TrainConfig(epochs=5, batch_size=16, lam=0.0, epsilon=0.05, seed=3)
    metrics, _ = train(model, data, cfg)
    assert metrics.test_error == 0.0


def test_robust_training_reduces_verified_susceptibility():
    data = _blobs(seed=5, n=60, dim=8)
    base = build_architecture("ffnn", (8,), 3, seed=5)
    cfg0 = TrainConfig(epochs=6, batch_size=16, lam=0.0, epsilon=0.05, seed=5)
    m0, _ = train(base, data, cfg0)
    robust = build_architecture("ffnn", (8,), 3, seed=5)
    cfg1 = TrainConfig(epochs=12, batch_size=16, lam=0.1, epsilon=0.05,
                       domain="box", adversary_kind="worst_corner", seed=5)
    m1, _ = train(robust, data, cfg1)
    assert m1.verify_error < m0.verify_error
    assert m1.test_error <= m0.test_error + 20.0


def test_non_finite_loss_aborts_with_diagnostics():
    data = _blobs()
    model = build_architecture("ffnn", (6,), 3, seed=0)
    cfg = TrainConfig(epochs=1, batch_size=16, lam=0.0, epsilon=0.05,
                      learning_rate=1e100, seed=0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericError, match="non-finite"):
            train(model, data, cfg)


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        TrainConfig(domain="octagon").validate()
    with pytest.raises(ConfigError):
        TrainConfig(adversary_kind="nearest").validate()
    with pytest.raises(ConfigError):
        TrainConfig(epsilon=-0.1).validate()
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1).validate()
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(property_kind="no_such").make_property()


def test_train_is_deterministic_for_a_seed():
    data = _blobs(seed=9)
    cfg = TrainConfig(epochs=2, batch_size=16, lam=0.0, epsilon=0.05, seed=9)
    m1 = build_architecture("ffnn", (6,), 3, seed=9)
    met1, hist1 = train(m1, data, cfg)
    m2 = build_architecture("ffnn", (6,), 3, seed=9)
    met2, hist2 = train(m2, data, cfg)
    assert met1.to_dict() == met2.to_dict()
    assert hist1 == hist2
    for name, t in m1.graph.variables.items():
        assert np.array_equal(m1.graph.values[t],
                              m2.graph.values[m2.graph.variables[name]])
