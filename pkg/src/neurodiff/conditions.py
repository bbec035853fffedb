"""Initial/boundary conditions enforced exactly by reparameterization.

Each condition turns a raw network output into a trial solution that
satisfies the constraint identically for *every* parameter setting of the
network, so the training loss never has to pay for boundary mismatch.

``reparameterize(coords, net_fn)`` receives the coordinate variable nodes
(each N x 1) and a closure ``net_fn(*coords) -> N x 1 node`` running the raw
network; the closure is also invoked at boundary coordinates when the
construction needs boundary values or derivatives of the network itself.

Condition constants may be given as bundle-parameter names (strings); they
are then resolved against the sampled parameter columns at build time.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


def _resolve(value, params, n):
    """Turn a constant or a bundle-parameter name into a graph node."""
    if isinstance(value, str):
        if params is None or value not in params:
            raise ValueError(f"unknown bundle parameter {value!r}")
        return params[value]
    if isinstance(value, ad.Node):
        return value
    return ad.constant(float(value))


def _const_column(x, like):
    n = like.value.shape[0]
    return ad.variable(np.full((n, 1), float(x)), requires_grad=True)


def _check_arity(cond, coords, expected):
    if len(coords) != expected:
        raise ValueError(
            f"{type(cond).__name__} expects {expected} coordinate(s), "
            f"got {len(coords)}"
        )


@dataclass(frozen=True)
class NoCondition:
    def reparameterize(self, coords, net_fn, params=None):
        return net_fn(*coords)


@dataclass(frozen=True)
class IVP1:
    t0: float
    u0: object

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        t = coords[0]
        u0 = _resolve(self.u0, params, t.value.shape[0])
        tau = t - self.t0
        return u0 + (1.0 - ad.exp(-tau)) * net_fn(t)


@dataclass(frozen=True)
class IVP2:
    t0: float
    u0: object
    du0: object

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        t = coords[0]
        u0 = _resolve(self.u0, params, t.value.shape[0])
        du0 = _resolve(self.du0, params, t.value.shape[0])
        tau = t - self.t0
        # squared damping keeps the derivative constraint untouched
        return u0 + du0 * tau + (1.0 - ad.exp(-tau)) ** 2 * net_fn(t)


@dataclass(frozen=True)
class DirichletBVP1D:
    x0: float
    u0: object
    x1: float
    u1: object

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ValueError("DirichletBVP1D requires x0 < x1")

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        x = coords[0]
        u0 = _resolve(self.u0, params, x.value.shape[0])
        u1 = _resolve(self.u1, params, x.value.shape[0])
        xt = (x - self.x0) / (self.x1 - self.x0)
        return (1.0 - xt) * u0 + xt * u1 + xt * (1.0 - xt) * net_fn(x)


@dataclass(frozen=True)
class DirichletNeumann:
    """u(x0) = u0 and u'(x1) = du1."""

    x0: float
    u0: object
    x1: float
    du1: object

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ValueError("DirichletNeumann requires x0 < x1")

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        x = coords[0]
        u0 = _resolve(self.u0, params, x.value.shape[0])
        du1 = _resolve(self.du1, params, x.value.shape[0])
        length = self.x1 - self.x0
        tau = x - self.x0
        xb = _const_column(self.x1, x)
        nb = net_fn(xb)
        dnb = ad.diff(nb, xb)
        return u0 + du1 * tau + tau * (net_fn(x) - nb - length * dnb)


@dataclass(frozen=True)
class NeumannDirichlet:
    """u'(x0) = du0 and u(x1) = u1."""

    x0: float
    du0: object
    x1: float
    u1: object

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ValueError("NeumannDirichlet requires x0 < x1")

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        x = coords[0]
        du0 = _resolve(self.du0, params, x.value.shape[0])
        u1 = _resolve(self.u1, params, x.value.shape[0])
        length = self.x1 - self.x0
        xa = _const_column(self.x0, x)
        na = net_fn(xa)
        dna = ad.diff(na, xa)
        return (u1 + du0 * (x - self.x1)
                + (x - self.x1) * (net_fn(x) - na + length * dna))


@dataclass(frozen=True)
class NeumannNeumann:
    """u'(x0) = du0 and u'(x1) = du1 (solution fixed up to a constant,
    pinned here by the raw network value)."""

    x0: float
    du0: object
    x1: float
    du1: object

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ValueError("NeumannNeumann requires x0 < x1")

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, 1)
        x = coords[0]
        du0 = _resolve(self.du0, params, x.value.shape[0])
        du1 = _resolve(self.du1, params, x.value.shape[0])
        length = self.x1 - self.x0
        tau = x - self.x0
        xa = _const_column(self.x0, x)
        xb = _const_column(self.x1, x)
        dna = ad.diff(net_fn(xa), xa)
        dnb = ad.diff(net_fn(xb), xb)
        quad = tau ** 2 / (2.0 * length)
        return (du0 * tau + (du1 - du0) * quad
                + net_fn(x) - tau * dna - quad * (dnb - dna))


@dataclass(frozen=True)
class InfinityBVP:
    """u(r0) = u0 with a prescribed limit u_inf as r -> infinity.

    u0 and u_inf may also be callables of the angular coordinate nodes
    (spherical generalization); the extra coordinates are then passed along
    after r.

    ``decay`` sets the rate of the e^{-decay (r - r0)} envelope on the u0
    and network terms.  The default rate 1 is the standard form; a slower
    rate keeps the network output O(1) when the solution approaches its
    limit algebraically (like -1/r) rather than exponentially.  Any
    positive rate enforces both constraints exactly.
    """

    r0: float
    u0: object
    u_inf: object
    decay: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.r0):
            raise ValueError("InfinityBVP requires a finite r0")
        if self.decay <= 0:
            raise ValueError("InfinityBVP requires decay > 0")

    def reparameterize(self, coords, net_fn, params=None):
        if not coords:
            raise ValueError("InfinityBVP expects at least the radial coordinate")
        r = coords[0]
        angles = coords[1:]
        if callable(self.u0) and not isinstance(self.u0, ad.Node):
            u0 = self.u0(*angles)
        else:
            u0 = _resolve(self.u0, params, r.value.shape[0])
        if callable(self.u_inf) and not isinstance(self.u_inf, ad.Node):
            u_inf = self.u_inf(*angles)
        else:
            u_inf = _resolve(self.u_inf, params, r.value.shape[0])
        s = r - self.r0
        damp = ad.exp(-self.decay * s)
        gate = ad.tanh(s)
        return gate * u_inf + damp * u0 + gate * damp * net_fn(*coords)


@dataclass(frozen=True)
class BoxIC:
    """u(t=0, x) = f(x) on the unit hypercube with u = 0 on the boundary.

    ``initial_profile`` maps the D spatial coordinate nodes to a node and
    must vanish on the hypercube boundary.  Coordinates are (t, x_1..x_D).
    """

    initial_profile: object
    dim: int

    def reparameterize(self, coords, net_fn, params=None):
        _check_arity(self, coords, self.dim + 1)
        t = coords[0]
        xs = coords[1:]
        bump = xs[0] * (1.0 - xs[0])
        for xd in xs[1:]:
            bump = bump * (xd * (1.0 - xd))
        return (self.initial_profile(*xs)
                + (1.0 - ad.exp(-t)) * bump * net_fn(*coords))


ALL_VARIANTS = (NoCondition, IVP1, IVP2, DirichletBVP1D, DirichletNeumann,
                NeumannDirichlet, NeumannNeumann, InfinityBVP, BoxIC)
