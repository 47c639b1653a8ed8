"""Problem definitions: Kepler two-body and 1-DOF separable mechanical systems.

All models are separable with a constant symmetric positive definite mass
matrix:  L(q, v) = v'Mv/2 - V(q)  and  H(q, p) = p'M^{-1}p/2 + V(q).
Models are immutable after construction and safe for shared reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import mpmath
import numpy as np

from .errors import ConfigurationError, SingularityError, UnsupportedOrderError
from .precision import DOUBLE, PrecisionContext, Real

#: Reject configurations closer to the gravitational singularity than this;
#: trajectories in scope never approach collision, so hitting the guard
#: indicates solver divergence.
KEPLER_RADIUS_GUARD = 1e-8


@dataclass(frozen=True)
class ExtendedState:
    """One point of the extended discrete trajectory: (t, q, p, E)."""

    t: Real
    q: np.ndarray
    p: np.ndarray
    E: Real

    def validate(self, n: Optional[int] = None) -> "ExtendedState":
        if len(self.q) != len(self.p):
            raise ConfigurationError("q and p must have equal dimension")
        if n is not None and len(self.q) != n:
            raise ConfigurationError(f"state dimension {len(self.q)} != model dimension {n}")
        components = [self.t, self.E, *self.q, *self.p]
        if not all(mpmath.isfinite(c) for c in components):
            raise ConfigurationError("state has non-finite components")
        return self


class LagrangianModel:
    """Base class: dimension, mass matrix, potential with derivatives."""

    name: str = "model"

    def __init__(self, n: int, mass_matrix, ctx: PrecisionContext = DOUBLE):
        self.n = n
        self.ctx = ctx
        self.M = ctx.array(mass_matrix)
        self.M_inv = ctx.array(np.linalg.inv(np.asarray(mass_matrix, dtype=float)))
        self.params: dict = {}

    # potential interface -----------------------------------------------------

    def potential(self, q) -> Real:
        raise NotImplementedError

    def potential_gradient(self, q) -> np.ndarray:
        raise NotImplementedError

    def potential_hessian(self, q) -> np.ndarray:
        raise NotImplementedError

    def potential_third(self, q) -> Real:
        """Third derivative; only defined for 1-DOF models."""
        raise UnsupportedOrderError(f"third potential derivative unavailable for {self.name}")

    # energies ---------------------------------------------------------------

    def lagrangian(self, q, v) -> Real:
        return (v * np.dot(self.M, v)).sum() / 2 - self.potential(q)

    def hamiltonian(self, q, p) -> Real:
        return (p * np.dot(self.M_inv, p)).sum() / 2 + self.potential(q)


class KeplerTwoBody(LagrangianModel):
    """Planar two-body problem, H = (p1^2 + p2^2)/2 - 1/sqrt(q1^2 + q2^2)."""

    name = "kepler"

    def __init__(self, ctx: PrecisionContext = DOUBLE):
        super().__init__(2, np.eye(2), ctx)

    def _radius(self, q) -> Real:
        r = self.ctx.sqrt((q * q).sum())
        if r < KEPLER_RADIUS_GUARD:
            raise SingularityError(f"|q| = {r} below collision guard {KEPLER_RADIUS_GUARD}")
        return r

    def potential(self, q) -> Real:
        return -1 / self._radius(q)

    def potential_gradient(self, q) -> np.ndarray:
        r = self._radius(q)
        return q / r ** 3

    def potential_hessian(self, q) -> np.ndarray:
        r = self._radius(q)
        return self.ctx.identity(2) / r ** 3 - 3 * np.outer(q, q) / r ** 5


class HarmonicOscillator(LagrangianModel):
    """1-DOF oscillator, V = k q^2 / 2.  k = 0 gives a free particle."""

    name = "oscillator"

    def __init__(self, k: float = 1.0, m: float = 1.0, ctx: PrecisionContext = DOUBLE):
        if m <= 0:
            raise ConfigurationError("oscillator mass must be positive")
        super().__init__(1, [[m]], ctx)
        self.k = ctx.real(k)
        self.m = ctx.real(m)
        self.params = {"k": k, "m": m}

    def potential(self, q) -> Real:
        return self.k * q[0] ** 2 / 2

    def potential_gradient(self, q) -> np.ndarray:
        return self.k * q

    def potential_hessian(self, q) -> np.ndarray:
        return self.ctx.array([[self.k]])

    def potential_third(self, q) -> Real:
        return self.ctx.real(0)


class Pendulum(LagrangianModel):
    """1-DOF pendulum, V = -cos(q); exercises a non-vanishing third derivative."""

    name = "pendulum"

    def __init__(self, m: float = 1.0, ctx: PrecisionContext = DOUBLE):
        if m <= 0:
            raise ConfigurationError("pendulum mass must be positive")
        super().__init__(1, [[m]], ctx)
        self.m = ctx.real(m)
        self.params = {"m": m}

    def potential(self, q) -> Real:
        return -self.ctx.cos(q[0])

    def potential_gradient(self, q) -> np.ndarray:
        return self.ctx.array([self.ctx.sin(q[0])])

    def potential_hessian(self, q) -> np.ndarray:
        return self.ctx.array([[self.ctx.cos(q[0])]])

    def potential_third(self, q) -> Real:
        return -self.ctx.sin(q[0])


# -- module-level operations --------------------------------------------------


def kepler_hamiltonian(q, p, ctx: PrecisionContext = DOUBLE) -> Real:
    """Energy ((p1)^2 + (p2)^2)/2 - 1/sqrt((q1)^2 + (q2)^2) of a Kepler state."""
    with ctx.activate():
        return KeplerTwoBody(ctx).hamiltonian(ctx.array(q), ctx.array(p))


def kepler_initial_state(e: float, ctx: PrecisionContext = DOUBLE) -> ExtendedState:
    """Perihelion start of the eccentricity-e orbit.

    q = (1-e, 0), p = (0, sqrt((1+e)/(1-e))); the energy is -1/2 for every
    admissible e, so the orbit has semi-major axis 1 and period 2*pi.
    """
    if not 0 <= e < 1:
        raise ConfigurationError(f"eccentricity must lie in [0, 1), got {e}")
    with ctx.activate():
        one = ctx.real(1)
        ev = ctx.real(e)
        q = ctx.array([0, 0])
        q[0] = one - ev
        p = ctx.array([0, 0])
        p[1] = ctx.sqrt((one + ev) / (one - ev))
        return ExtendedState(t=ctx.real(0), q=q, p=p, E=kepler_hamiltonian(q, p, ctx))


def potential_derivs(model: LagrangianModel, q, order: int):
    """Analytic potential derivative of the given order (0..3) at q."""
    if order == 0:
        return model.potential(q)
    if order == 1:
        return model.potential_gradient(q)
    if order == 2:
        return model.potential_hessian(q)
    if order == 3:
        if model.n != 1:
            raise UnsupportedOrderError("third derivative requires a 1-DOF model")
        return model.potential_third(q)
    raise UnsupportedOrderError(f"derivative order {order} not supported")


def angular_momentum(q, p) -> Real:
    """Planar angular momentum Lz = q1 p2 - q2 p1."""
    return q[0] * p[1] - q[1] * p[0]


_MODEL_BUILDERS = {
    "kepler": lambda params, ctx: KeplerTwoBody(ctx),
    "oscillator": lambda params, ctx: HarmonicOscillator(
        k=params.get("k", 1.0), m=params.get("m", 1.0), ctx=ctx
    ),
    "pendulum": lambda params, ctx: Pendulum(m=params.get("m", 1.0), ctx=ctx),
}


def model_names():
    return sorted(_MODEL_BUILDERS)


def make_model(name: str, params: Optional[dict] = None, ctx: PrecisionContext = DOUBLE):
    """Build a registered model (`kepler`, `oscillator`, `pendulum`) by name."""
    try:
        builder = _MODEL_BUILDERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; known: {model_names()}") from None
    return builder(params or {}, ctx)


def initial_state(name: str, params: Optional[dict] = None, ctx: PrecisionContext = DOUBLE) -> ExtendedState:
    """Canonical initial condition for a registered problem.

    Kepler starts at perihelion for eccentricity ``e``; the 1-DOF systems
    start from rest at q = q0 (default 1).
    """
    params = params or {}
    if name == "kepler":
        return kepler_initial_state(params.get("e", 0.1), ctx)
    model = make_model(name, params, ctx)
    with ctx.activate():
        q = ctx.array([params.get("q0", 1.0)])
        p = ctx.array([params.get("p0", 0.0)])
        return ExtendedState(t=ctx.real(0), q=q, p=p, E=model.hamiltonian(q, p))
