"""Optimal 1D activation transformers.

For an activation f over a per-coordinate interval [lo, hi] the transformer
builds the minimal parallelogram with chord slope

    mu = (f(hi) - f(lo)) / (hi - lo)

containing the graph of f.  Writing t(x) = f(x) - mu*x (the offset of f
from the slope-mu line), t is extremal either at an endpoint or where
f'(x) = mu — the activation's *extremum function*.  The parallelogram's
height is e = max t - min t and its vertical center mid-offset, giving the
output element

    < (tmax+tmin)/2 + mu*c,  |mu|*b + e/2,  mu*E >.

Offsets are evaluated at both endpoints plus every extremum candidate
clamped into [lo, hi], so containment holds for any mu — including the
guarded value used when the interval is (near-)degenerate.  Intervals
narrower than 1e-12 collapse to the point case <f(c), 0, 0*E>.

Everything is written against the dual-mode primitives: no Python-level
branching on values, so the same code runs eagerly and symbolically, and
every quantity stays finite even in unselected branches (which matters
for reverse-mode gradients: 0 * inf would poison them).
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .domains import Box, HybridZonotope, bounds
from .errors import DomainError, UnsupportedOpError
from .tensor import OpKind

POINT_WIDTH = 1e-12   # intervals at most this wide collapse to the point case
TINY = 1e-30          # guard for logs/divisions in unselected branches


def _safe_log(x):
    return ops.log(ops.maximum(x, TINY))


def _safe_sqrt(x):
    return ops.exp(ops.mul(_safe_log(ops.maximum(x, 0.0)), 0.5))


@dataclass(frozen=True)
class Activation1D:
    """A scalar activation plus the data the parallelogram construction needs.

    ``extrema(mu, lo, hi)`` returns the candidate tangency points where
    f' = mu; convex/concave shapes have one, sigmoid has a pair.
    ``domain_min`` is an open lower bound on valid inputs (None if fully
    defined on the reals).
    """
    name: str
    shape: str                      # "convex" | "concave" | "nonconvex"
    f: object
    extrema: object
    domain_min: float = None


def _relu_extrema(mu, lo, hi):
    return [ops.mul(mu, 0.0)]       # the kink at 0, shaped like mu


def _abs_extrema(mu, lo, hi):
    return [ops.mul(mu, 0.0)]


def _exp_extrema(mu, lo, hi):
    return [_safe_log(mu)]          # exp' = mu at ln(mu)


def _log_extrema(mu, lo, hi):
    return [ops.div(1.0, ops.maximum(mu, TINY))]


def _log1p_extrema(mu, lo, hi):
    return [ops.sub(ops.div(1.0, ops.maximum(mu, TINY)), 1.0)]


def _sigmoid_extrema(mu, lo, hi):
    # sigmoid'(x) = mu at x = -ln Y for the roots of mu*Y^2 + (2mu-1)*Y + mu
    # = 0; the roots' product is 1, so the pair is symmetric about 0.
    m = ops.maximum(mu, TINY)
    disc = ops.maximum(ops.sub(1.0, ops.mul(4.0, m)), 0.0)
    r = _safe_sqrt(disc)
    base = ops.sub(1.0, ops.mul(2.0, m))
    y_hi = ops.div(ops.add(base, r), ops.mul(2.0, m))
    y_lo = ops.div(ops.sub(base, r), ops.mul(2.0, m))
    return [ops.neg(_safe_log(y_hi)), ops.neg(_safe_log(y_lo))]


ACTIVATIONS = {
    OpKind.RELU: Activation1D("relu", "convex", ops.relu, _relu_extrema),
    OpKind.ABS: Activation1D("abs", "convex", ops.abs_, _abs_extrema),
    OpKind.EXP: Activation1D("exp", "convex", ops.exp, _exp_extrema),
    OpKind.LOG: Activation1D("log", "concave", ops.log, _log_extrema, domain_min=0.0),
    OpKind.LOG1P: Activation1D("log1p", "concave", ops.log1p, _log1p_extrema,
                               domain_min=-1.0),
    OpKind.SIGMOID: Activation1D("sigmoid", "nonconvex", ops.sigmoid,
                                 _sigmoid_extrema),
}


def _check_domain(act, lo):
    if act.domain_min is None or ops.is_sym(lo):
        return  # symbolic inputs fail at evaluation time via the kernel checks
    if np.any(np.asarray(lo, dtype=np.float64) <= act.domain_min):
        raise DomainError(f"{act.name} undefined on the input interval "
                          f"(lower bound <= {act.domain_min})")


def _offsets(act, mu, lo, hi):
    """(tmin, tmax) of t(x) = f(x) - mu*x over [lo, hi]."""
    t_lo = ops.sub(act.f(lo), ops.mul(mu, lo))
    t_hi = ops.sub(act.f(hi), ops.mul(mu, hi))
    tmin = ops.minimum(t_lo, t_hi)
    tmax = ops.maximum(t_lo, t_hi)
    for cand in act.extrema(mu, lo, hi):
        x = ops.minimum(ops.maximum(cand, lo), hi)
        t = ops.sub(act.f(x), ops.mul(mu, x))
        tmin = ops.minimum(tmin, t)
        tmax = ops.maximum(tmax, t)
    return tmin, tmax


def slope_height_center(act, lo, hi):
    """Per-coordinate (mu, e, c_y-offset pair) of the enclosing parallelogram.

    Returns (mu, height, tmin, tmax).  The parallelogram is
    { (x, y) : lo <= x <= hi, tmin <= y - mu*x <= tmax }.
    """
    width = ops.sub(hi, lo)
    mu = ops.div(ops.sub(act.f(hi), act.f(lo)), ops.maximum(width, POINT_WIDTH))
    tmin, tmax = _offsets(act, mu, lo, hi)
    return mu, ops.sub(tmax, tmin), tmin, tmax


def _transform_hz(act, h):
    lo, hi = bounds(h).lower, bounds(h).upper
    _check_domain(act, lo)
    mu, height, tmin, tmax = slope_height_center(act, lo, hi)
    cy = ops.add(ops.mul(ops.add(tmax, tmin), 0.5), ops.mul(mu, h.c))
    by = ops.add(ops.mul(ops.abs_(mu), h.b), ops.mul(height, 0.5))
    point = ops.greater_equal(POINT_WIDTH, ops.sub(hi, lo))
    c_out = ops.select(point, act.f(h.c), cy)
    b_out = ops.select(point, ops.mul(by, 0.0), by)
    if h.e:
        mu_out = ops.select(point, ops.mul(mu, 0.0), mu)
        E_out = ops.mul(h.E, mu_out)
    else:
        E_out = None
    return HybridZonotope(c_out, b_out, E_out, h.e, h.origin)


def transform_convex(act, h):
    """Parallelogram transformer for convex/concave activations."""
    if act.shape not in ("convex", "concave"):
        raise UnsupportedOpError(act.name, HybridZonotope, "not convex/concave")
    return _transform_hz(act, h)


def transform_nonconvex(act, h):
    """Parallelogram transformer spanning both tangent offsets (sigmoid)."""
    if act.shape != "nonconvex":
        raise UnsupportedOpError(act.name, HybridZonotope, "not nonconvex")
    return _transform_hz(act, h)


def _interval_image(act, lo, hi):
    """Exact [min f, max f] over [lo, hi] for the registered activations.

    Each is monotone or (abs) has its single interior extremum among the
    tangency candidates, so endpoint+candidate evaluation is exact.
    """
    width = ops.sub(hi, lo)
    mu = ops.div(ops.sub(act.f(hi), act.f(lo)), ops.maximum(width, POINT_WIDTH))
    f_lo, f_hi = act.f(lo), act.f(hi)
    vmin = ops.minimum(f_lo, f_hi)
    vmax = ops.maximum(f_lo, f_hi)
    for cand in act.extrema(mu, lo, hi):
        x = ops.minimum(ops.maximum(cand, lo), hi)
        v = act.f(x)
        vmin = ops.minimum(vmin, v)
        vmax = ops.maximum(vmax, v)
    return vmin, vmax


def lift_activation(kind, d):
    """Coordinatewise activation transformer for either domain."""
    act = ACTIVATIONS.get(OpKind(kind))
    if act is None:
        raise UnsupportedOpError(kind, type(d), "no registered 1D activation")
    if isinstance(d, Box):
        lo, hi = bounds(d).lower, bounds(d).upper
        _check_domain(act, lo)
        vmin, vmax = _interval_image(act, lo, hi)
        c = ops.mul(ops.add(vmin, vmax), 0.5)
        b = ops.maximum(ops.mul(ops.sub(vmax, vmin), 0.5), 0.0)
        return Box(c, b)
    if isinstance(d, HybridZonotope):
        return _transform_hz(act, d)
    raise TypeError(f"not a domain element: {type(d)}")
