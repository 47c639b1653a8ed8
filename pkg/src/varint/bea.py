"""Backward-error-analysis verification.

In the fictitious time a with a prescribed smooth monotone map t(a), the
adaptive scheme is a fixed-step variational integrator for the transformed
Lagrangian t'(a) L(q, q'/t').  The residual of the discrete equations on a
smooth curve, the second-order modified equation for 1-DOF separable
systems, and the associated modified Lagrangians are implemented here,
together with numerical order-of-accuracy estimation.

Residual scaling: the discrete Euler-Lagrange residual evaluated on
solutions of the leading-order equation is O(da^3); on solutions of the
second-order modified equation it is O(da^5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, NonMonotoneTimeError, StiffnessError
from .integrators import discrete_partials_midpoint, reference_solve
from .models import DOUBLE, LagrangianModel, make_model
from .precision import Real

#: Fictitious-step sweep used by the order-estimation suite.  The smallest
#: value keeps the O(da^5) residual of the modified solutions two decades
#: above the inner ODE solver noise.
DEFAULT_DELTA_A_LIST = (0.32, 0.2263, 0.16, 0.1131, 0.08)

_INNER_RTOL = 1e-13
_INNER_ATOL = 1e-15


# -- time profiles ---------------------------------------------------------------


class TimeProfile:
    """Smooth map a -> t(a) with analytic derivatives to third order."""

    label = "profile"

    def value(self, a: float) -> float:
        raise NotImplementedError

    def d1(self, a: float) -> float:
        raise NotImplementedError

    def d2(self, a: float) -> float:
        raise NotImplementedError

    def d3(self, a: float) -> float:
        raise NotImplementedError

    def check_monotone(self, a0: float, a1: float, samples: int = 257) -> None:
        for a in np.linspace(a0, a1, samples):
            if self.d1(a) <= 0:
                raise NonMonotoneTimeError(f"{self.label}: t'({a}) = {self.d1(a)} is not positive")


class IdentityProfile(TimeProfile):
    label = "t=a"

    def value(self, a):
        return a

    def d1(self, a):
        return 1.0

    def d2(self, a):
        return 0.0

    def d3(self, a):
        return 0.0


class LinearProfile(TimeProfile):
    def __init__(self, rate: float):
        if rate <= 0:
            raise ConfigurationError("profile rate must be positive")
        self.rate = rate
        self.label = f"t={rate}a"

    def value(self, a):
        return self.rate * a

    def d1(self, a):
        return self.rate

    def d2(self, a):
        return 0.0

    def d3(self, a):
        return 0.0


class SineProfile(TimeProfile):
    """t(a) = a + c sin a, monotone for |c| < 1."""

    def __init__(self, c: float):
        if abs(c) >= 1:
            raise ConfigurationError("sine profile needs |c| < 1 for monotonicity")
        self.c = c
        self.label = f"t=a+{c}sin(a)"

    def value(self, a):
        return a + self.c * math.sin(a)

    def d1(self, a):
        return 1.0 + self.c * math.cos(a)

    def d2(self, a):
        return -self.c * math.sin(a)

    def d3(self, a):
        return -self.c * math.cos(a)


# -- jets and pointwise operations -------------------------------------------------


@dataclass(frozen=True)
class Jet1D:
    """Curve data (q, q', t', t'', t''') at one fictitious-time point.

    ``qpp``/``qppp`` extend the jet where an operation needs curvature of
    the configuration path.  ``delta_a = 0`` is allowed and gives the
    leading-order truncation.
    """

    q: Real
    qp: Real
    tp: Real
    tpp: Real
    tppp: Real = 0.0
    delta_a: Real = 0.0
    qpp: Optional[Real] = None
    qppp: Optional[Real] = None

    def __post_init__(self):
        if self.tp <= 0:
            raise NonMonotoneTimeError(f"jet has t' = {self.tp} <= 0")
        if self.delta_a < 0:
            raise ConfigurationError("delta_a must be non-negative")


@dataclass(frozen=True)
class ResidualPair:
    """Discrete Euler-Lagrange residual (per configuration component) and
    discrete energy residual at an interior point."""

    psi_el: np.ndarray
    psi_e: Real


def _require_1dof(model: LagrangianModel):
    if model.n != 1:
        raise ConfigurationError("this operation is defined for 1-DOF separable models")


def _derivs(model: LagrangianModel, q: Real):
    arr = np.array([q]) if model.ctx.is_native else model.ctx.array([q])
    V = model.potential(arr)
    Vq = model.potential_gradient(arr)[0]
    Vqq = model.potential_hessian(arr)[0, 0]
    Vqqq = model.potential_third(arr)
    return V, Vq, Vqq, Vqqq


def discrete_residual(model, prev: Tuple, mid: Tuple, nxt: Tuple, delta_a) -> ResidualPair:
    """Residual of the discrete equations at the middle of three (t, q) points.

    ``psi_el`` sums the configuration partials of the two adjacent discrete
    Lagrangians at the middle point; ``psi_e`` sums the time partials.  In
    the transformed setting the discrete Lagrangian takes identical values
    to the physical midpoint L_d at the same points, so ``delta_a`` only
    describes the sampling and does not enter the value.
    """
    if delta_a <= 0:
        raise ConfigurationError("delta_a must be positive")
    (t_m, q_m), (t_0, q_0), (t_p, q_p) = prev, mid, nxt
    q_m, q_0, q_p = (np.atleast_1d(x) for x in (q_m, q_0, q_p))
    if not (t_m < t_0 < t_p):
        raise NonMonotoneTimeError("points must have strictly increasing times")
    left = discrete_partials_midpoint(model, t_m, q_m, t_0, q_0)
    right = discrete_partials_midpoint(model, t_0, q_0, t_p, q_p)
    return ResidualPair(psi_el=left.d4 + right.d2, psi_e=left.d3 + right.d1)


def modified_rhs_order2(model: LagrangianModel, jet: Jet1D) -> Real:
    """q'' of the second-order modified equation in the transformed time.

    q'' = q' t''/t' - t'^2 V_q / m
        + (da^2 / 24m) (4 t'^4 V_q V_qq / m - 4 q' t' t'' V_qq - q'^2 t'^2 V_qqq)
    """
    _require_1dof(model)
    with model.ctx.activate():
        m = model.M[0, 0]
        _, Vq, Vqq, Vqqq = _derivs(model, jet.q)
        qp, tp, tpp, da = jet.qp, jet.tp, jet.tpp, jet.delta_a
        leading = qp * tpp / tp - tp ** 2 * Vq / m
        correction = (da ** 2 / (24 * m)) * (
            4 * tp ** 4 * Vq * Vqq / m - 4 * qp * tp * tpp * Vqq - qp ** 2 * tp ** 2 * Vqqq
        )
        return leading + correction


def modified_lagrangian_mod3(model: LagrangianModel, q, qp, tp, delta_a) -> Real:
    """Truncated modified Lagrangian (first-derivative data only).

    t' (m (q'/t')^2 / 2 - V) + (da^2 / 24) (t'^3 V_q^2 / m + q'^2 t' V_qq)
    """
    _require_1dof(model)
    if tp <= 0:
        raise NonMonotoneTimeError(f"t' = {tp} must be positive")
    with model.ctx.activate():
        m = model.M[0, 0]
        V, Vq, Vqq, _ = _derivs(model, q)
        leading = tp * (m * (qp / tp) ** 2 / 2 - V)
        return leading + (delta_a ** 2 / 24) * (tp ** 3 * Vq ** 2 / m + qp ** 2 * tp * Vqq)


def meshed_lagrangian_order2(model: LagrangianModel, jet: Jet1D) -> Real:
    """Second-order meshed modified Lagrangian (needs q'' in the jet).

    The third-derivative entries of the jet cancel from this truncation
    order and do not appear.
    """
    _require_1dof(model)
    if jet.qpp is None:
        raise ConfigurationError("meshed evaluation needs q'' in the jet")
    with model.ctx.activate():
        m = model.M[0, 0]
        V, Vq, Vqq, _ = _derivs(model, jet.q)
        qp, qpp, tp, tpp, da = jet.qp, jet.qpp, jet.tp, jet.tpp, jet.delta_a
        leading = tp * (m * (qp / tp) ** 2 / 2 - V)
        second = (
            -m * qpp ** 2 / tp
            + 2 * m * qp * qpp * tpp / tp ** 2
            - m * qp ** 2 * tpp ** 2 / tp ** 3
            + 2 * qp * tpp * Vq
            + qp ** 2 * tp * Vqq
            - 2 * qpp * tp * Vq
        )
        return leading + (da ** 2 / 24) * second


# -- order-of-accuracy estimation ----------------------------------------------------


def _as_double(model: LagrangianModel) -> LagrangianModel:
    return model if model.ctx.is_native else make_model(model.name, model.params, DOUBLE)


def _transformed_rhs_1dof(model, profile, delta_a, use_modified):
    def rhs(a, y):
        jet = Jet1D(
            q=y[0], qp=y[1],
            tp=profile.d1(a), tpp=profile.d2(a), tppp=profile.d3(a),
            delta_a=delta_a if use_modified else 0.0,
        )
        return [y[1], modified_rhs_order2(model, jet)]

    return rhs


@dataclass
class OrderEstimate:
    """Least-squares slopes of log residual norm against log delta_a."""

    slope: float
    slope_energy: float
    samples: List[Tuple[float, float, float]]  # (delta_a, |psi_el|_inf, |psi_e|_inf)
    use_modified: bool


def residual_order_estimate(
    model: LagrangianModel,
    profile: TimeProfile,
    use_modified: bool,
    delta_a_list: Sequence[float] = DEFAULT_DELTA_A_LIST,
    window: float = 2 * math.pi,
    n_samples: int = 10,
    q0: float = 1.0,
    qp0: float = 0.0,
) -> OrderEstimate:
    """Numerical order of the discrete residual on smooth solution families.

    For each fictitious step, integrates the leading-order equation (flag
    off) or the second-order modified equation (flag on) against the given
    time profile, samples centred triples at interior points (a margin of
    2 da is excluded at each end), and fits the slope of log |psi_el|_inf
    versus log da.  The psi_e slope is measured alongside and reported.
    """
    model = _as_double(model)
    _require_1dof(model)
    delta_a_list = sorted(delta_a_list, reverse=True)
    if len(delta_a_list) < 4:
        raise ConfigurationError("need at least 4 delta_a values for a slope fit")
    if any(d <= 0 for d in delta_a_list):
        raise ConfigurationError("delta_a values must be positive")
    if window <= 4 * max(delta_a_list):
        raise ConfigurationError("window too short for the largest delta_a")
    profile.check_monotone(-max(delta_a_list), window + max(delta_a_list))

    samples = []
    for da in delta_a_list:
        sol = solve_ivp(
            _transformed_rhs_1dof(model, profile, da, use_modified),
            (0.0, window), [q0, qp0],
            method="DOP853", rtol=_INNER_RTOL, atol=_INNER_ATOL, dense_output=True,
        )
        if not sol.success:
            raise StiffnessError(f"inner solve failed at delta_a={da}: {sol.message}")
        el_max, e_max = 0.0, 0.0
        for a in np.linspace(2 * da, window - 2 * da, n_samples):
            pts = [
                (profile.value(x), sol.sol(x)[0]) for x in (a - da, a, a + da)
            ]
            pair = discrete_residual(model, *pts, delta_a=da)
            el_max = max(el_max, float(np.abs(pair.psi_el).max()))
            e_max = max(e_max, abs(float(pair.psi_e)))
        samples.append((da, el_max, e_max))

    logs = np.log(np.asarray(samples, dtype=float))
    slope = float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])
    slope_e = float(np.polyfit(logs[:, 0], logs[:, 2], 1)[0])
    return OrderEstimate(slope=slope, slope_energy=slope_e, samples=samples, use_modified=use_modified)


def lemma1_reparametrization_check(
    model: LagrangianModel,
    profile: TimeProfile,
    state0,
    T: float,
    reltol: float = 1e-12,
) -> float:
    """Max deviation between the transformed-time solution and the
    reparametrized physical solution.

    Integrates the transformed Euler-Lagrange equation for q(a) with the
    prescribed t(a) and compares q(a) against q_phys(t0 + alpha(a)) with
    alpha(a) = t(a) - t(0); equality of trajectories makes the deviation
    solver-level small.
    """
    model = _as_double(model)
    profile.check_monotone(0.0, T)
    n = model.n
    q0 = np.asarray(state0.q, dtype=float)
    v0 = np.dot(np.asarray(model.M_inv, dtype=float), np.asarray(state0.p, dtype=float))

    def rhs(a, y):
        q, qp = y[:n], y[n:]
        tp, tpp = profile.d1(a), profile.d2(a)
        return np.concatenate([qp, qp * tpp / tp - tp ** 2 * np.dot(model.M_inv, model.potential_gradient(q))])

    y0 = np.concatenate([q0, profile.d1(0.0) * v0])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853",
                    rtol=_INNER_RTOL, atol=_INNER_ATOL, dense_output=True)
    if not sol.success:
        raise StiffnessError(f"transformed solve failed: {sol.message}")

    alpha_T = profile.value(T) - profile.value(0.0)
    ref = reference_solve(model, state0, float(state0.t) + alpha_T, reltol=reltol, abstol=1e-14)

    deviation = 0.0
    for a in np.linspace(0.0, T, 201):
        q_a = sol.sol(a)[:n]
        q_ref, _ = ref.eval(float(state0.t) + profile.value(a) - profile.value(0.0))
        deviation = max(deviation, float(np.abs(q_a - q_ref).max()))
    return deviation
