"""Robustness properties: concrete input -> initial domain element.

A property turns a batched input tensor x of shape (N, *features) into the
abstract element describing the admissible perturbations around x.  The
constructed element's center is exactly x; generators are built over the
per-example feature shape and broadcast across the batch axis.

Built-ins mirror the standard set: the plain epsilon-ball in both box and
promoted-generator form, a global brightness shift, per-channel shifts, and
the plane-wave (Fourier) family.  Custom properties register a kind tag and
constructor; the engine only ever calls ``of``.
"""

import numpy as np

from . import ops
from .domains import Box, HybridZonotope, fresh_origin
from .errors import ConfigError, PropertyDomainError


def _feature_shape(x):
    if ops.is_sym(x):
        info = x.graph.infos[x.tid]
        if info.shape is None or len(info.shape) < 2:
            raise ConfigError("symbolic input must declare a (batch, *features) shape")
        feat = tuple(int(s) for s in info.shape[1:])
        if any(s <= 0 for s in feat):
            raise ConfigError("feature dimensions must be static")
        return feat
    shape = np.shape(x)
    if len(shape) < 2:
        raise ConfigError("property input must be batched: (N, *features)")
    return shape[1:]


class Property:
    """Base class; subclasses set SUPPORTED_DOMAINS and implement _element."""

    SUPPORTED_DOMAINS = (Box, HybridZonotope)
    kind = "custom"

    def __init__(self, epsilon):
        if epsilon < 0:
            raise ConfigError("property radius must be nonnegative")
        self.epsilon = float(epsilon)

    def of(self, domain, x):
        if domain not in self.SUPPORTED_DOMAINS:
            raise PropertyDomainError(
                f"{type(self).__name__} does not support domain "
                f"{getattr(domain, '__name__', domain)}")
        return self._element(domain, x)

    def _element(self, domain, x):
        raise NotImplementedError

    def contains_linf_ball(self):
        """True when the concretization is exactly the epsilon sup-ball."""
        return False


def of(p, domain, x):
    return p.of(domain, x)


class BallDemoted(Property):
    """The epsilon sup-ball kept in the box term."""

    kind = "ball_demoted"

    def _element(self, domain, x):
        b = ops.mul(ops.ones_like(x), self.epsilon)
        if domain is Box:
            return Box(x, b)
        return HybridZonotope(x, b, None, 0, 0)

    def contains_linf_ball(self):
        return True


class BallPromoted(Property):
    """The epsilon sup-ball as one diagonal generator per input coordinate."""

    kind = "ball_promoted"
    SUPPORTED_DOMAINS = (HybridZonotope,)

    def _element(self, domain, x):
        feat = _feature_shape(x)
        p = int(np.prod(feat))
        E = np.zeros((p, p))
        np.fill_diagonal(E, self.epsilon)
        E = E.reshape((p, 1) + tuple(feat))
        return HybridZonotope(x, ops.zeros_like(x), E, p, fresh_origin())

    def contains_linf_ball(self):
        return True


class Brightness(Property):
    """All pixels shifted by one shared value in [-epsilon, epsilon]."""

    kind = "brightness"
    SUPPORTED_DOMAINS = (HybridZonotope,)

    def _element(self, domain, x):
        feat = _feature_shape(x)
        E = np.full((1, 1) + tuple(feat), self.epsilon)
        return HybridZonotope(x, ops.zeros_like(x), E, 1, fresh_origin())


class UniformChannel(Property):
    """Each (trailing-axis) channel shifted independently."""

    kind = "uniform_channel"
    SUPPORTED_DOMAINS = (HybridZonotope,)

    def _element(self, domain, x):
        feat = _feature_shape(x)
        C = int(feat[-1])
        E = np.zeros((C, 1) + tuple(feat))
        for c in range(C):
            E[c, ..., c] = self.epsilon
        return HybridZonotope(x, ops.zeros_like(x), E, C, fresh_origin())


class Fourier(Property):
    """Plane-wave perturbations: each generator is epsilon times a sin/cos
    wave over the image plane, frequencies n in [-N, N], m in [-M, M],
    broadcast across channels.  Identically-zero waves are dropped."""

    kind = "fourier"
    SUPPORTED_DOMAINS = (HybridZonotope,)

    def __init__(self, epsilon, n=1, m=1):
        super().__init__(epsilon)
        if n < 0 or m < 0:
            raise ConfigError("Fourier frequency cutoffs must be nonnegative")
        self.n = int(n)
        self.m = int(m)

    def generators(self, feat):
        """Unscaled wave images (e, *feat); shared by `of` and the attack."""
        if len(feat) == 2:
            H, W = feat
            C = None
        elif len(feat) == 3:
            H, W, C = feat
        else:
            raise ConfigError("Fourier needs (H, W) or (H, W, C) inputs")
        ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
        waves = []
        for kappa in (np.sin, np.cos):
            for n in range(-self.n, self.n + 1):
                for m in range(-self.m, self.m + 1):
                    w = kappa(ii * (2 * np.pi * n / H) + jj * (2 * np.pi * m / W))
                    if np.max(np.abs(w)) < 1e-12:
                        continue
                    if C is not None:
                        w = np.repeat(w[..., None], C, axis=-1)
                    waves.append(w)
        return np.stack(waves) if waves else np.zeros((0,) + tuple(feat))

    def _element(self, domain, x):
        feat = _feature_shape(x)
        W = self.generators(feat)
        E = (self.epsilon * W)[:, None]
        return HybridZonotope(x, ops.zeros_like(x), E, E.shape[0], fresh_origin())


PROPERTY_KINDS = {
    "ball_demoted": BallDemoted,
    "ball_promoted": BallPromoted,
    "brightness": Brightness,
    "uniform_channel": UniformChannel,
    "fourier": Fourier,
}


def register_property(kind, cls):
    """Custom-property hook: register a constructor under a kind tag."""
    if not issubclass(cls, Property):
        raise ConfigError("custom properties must subclass Property")
    PROPERTY_KINDS[kind] = cls


def make_property(kind, epsilon, **params):
    cls = PROPERTY_KINDS.get(kind)
    if cls is None:
        raise ConfigError(f"unknown property kind {kind!r}; "
                          f"known: {sorted(PROPERTY_KINDS)}")
    return cls(epsilon, **params)
