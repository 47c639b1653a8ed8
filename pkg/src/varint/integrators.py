"""The integrator families.

* EpAVI: energy-preserving adaptive steps.  Both the configuration update
  and the time step come from one coupled implicit system built on the
  midpoint discrete Lagrangian over the extended states (t, q),

      L_d = (t_{k+1} - t_k) * L((q_k + q_{k+1})/2, (q_{k+1} - q_k)/(t_{k+1} - t_k)).

  The implicit pair is  -D2 L_d = p_k  and  D1 L_d = E_k;  afterwards
  p_{k+1} = D4 L_d  and  E_{k+1} = -D3 L_d  are explicit.  For the midpoint
  rule D1 = -D3 identically, so the discrete energy is conserved up to the
  solver residual of the energy row.

* AVI: a monitor function g(q) > 0 prescribes dt/da = g; implicit midpoint
  with fixed fictitious step da applied to the rescaled Hamiltonian field
  gives the coupled equations

      (q_{k+1}-q_k)/da =  g(q_av) H_p(q_av, p_av),
      (p_{k+1}-p_k)/da = -g(q_av) H_q(q_av, p_av),
      (t_{k+1}-t_k)/da =  g(q_av),

  with arithmetic midpoints q_av, p_av and the auxiliary momentum held at
  -H(q_0, p_0).

* A fixed-step implicit midpoint integrator (Lagrangian form) and a dense
  adaptive Runge-Kutta reference solver.

All implicit solves use the step increments (dq, h) as unknowns: the
residuals are then insensitive to the absolute magnitude of t, which keeps
the attainable residual floor at the representation level over a full
period.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ConfigurationError,
    IntegrationError,
    MonitorDomainError,
    NonconvergenceError,
    NonMonotoneTimeError,
    StiffnessError,
    VarintError,
)
from .models import DOUBLE, ExtendedState, LagrangianModel, make_model
from .precision import Real, inf_norm
from .solvers import SolverConfig, newton_solve

# -- discrete Lagrangian and its partials --------------------------------------


@dataclass(frozen=True)
class DiscretePartials:
    """Partial derivatives of the midpoint L_d at one step pair.

    d1 = dL_d/dt_k (scalar), d2 = dL_d/dq_k, d3 = dL_d/dt_{k+1} (scalar),
    d4 = dL_d/dq_{k+1}.
    """

    d1: Real
    d2: np.ndarray
    d3: Real
    d4: np.ndarray


def discrete_lagrangian_midpoint(model: LagrangianModel, t_k, q_k, t_k1, q_k1) -> Real:
    """(t_{k+1} - t_k) * L(midpoint configuration, difference velocity)."""
    h = t_k1 - t_k
    if h <= 0:
        raise NonMonotoneTimeError(f"t_{{k+1}} - t_k = {h} must be positive")
    v = (q_k1 - q_k) / h
    return h * model.lagrangian((q_k + q_k1) / 2, v)


def _increment_partials(model, q_k, dq, h) -> DiscretePartials:
    """Partials evaluated from the step increments (dq, h).

    Mathematically identical to :func:`discrete_partials_midpoint`, but
    avoids re-differencing the endpoints, which would cost ulp(t)/h in the
    velocity and dominate the per-step energy defect late in a run.
    """
    v = dq / h
    mid = q_k + dq / 2
    Mv = np.dot(model.M, v)
    grad = model.potential_gradient(mid)
    kinetic = (v * Mv).sum() / 2
    pot = model.potential(mid)
    return DiscretePartials(
        d1=kinetic + pot,
        d2=-Mv - (h / 2) * grad,
        d3=-kinetic - pot,
        d4=Mv - (h / 2) * grad,
    )


def discrete_partials_midpoint(model: LagrangianModel, t_k, q_k, t_k1, q_k1) -> DiscretePartials:
    """Closed-form partials of the midpoint L_d for separable models.

    With v the difference velocity and V evaluated at the configuration
    midpoint:  d1 = v'Mv/2 + V = -d3  (the discrete energy), and
    d2 = -Mv - (h/2) grad V,  d4 = Mv - (h/2) grad V.
    """
    h = t_k1 - t_k
    if h <= 0:
        raise NonMonotoneTimeError(f"t_{{k+1}} - t_k = {h} must be positive")
    return _increment_partials(model, q_k, q_k1 - q_k, h)


# -- trajectories ----------------------------------------------------------------


@dataclass
class StepRecord:
    """Per-step solver metadata."""

    h: Real
    residual_norm: Real
    iterations: int
    delta_a: Optional[Real] = None
    condition_estimate: float = 0.0
    stalled: bool = False


@dataclass
class Trajectory:
    """Ordered extended states with per-step solver metadata."""

    states: List[ExtendedState]
    steps: List[StepRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    def times(self) -> np.ndarray:
        return np.array([float(s.t) for s in self.states])

    def energies(self) -> list:
        return [s.E for s in self.states]

    def step_sizes(self) -> np.ndarray:
        return np.array([float(r.h) for r in self.steps])

    def validate(self) -> "Trajectory":
        ts = [s.t for s in self.states]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise NonMonotoneTimeError("trajectory times are not strictly increasing")
        return self


# -- EpAVI ------------------------------------------------------------------------


def _epavi_system(model, state):
    """Residual and analytic Jacobian in the increments z = (dq, h)."""
    n = model.n
    M, p_k, E_k, q_k = model.M, state.p, state.E, state.q

    def residual(z):
        dq, h = z[:n], z[n]
        v = dq / h
        mid = q_k + dq / 2
        grad = model.potential_gradient(mid)
        out = np.empty(n + 1, dtype=z.dtype)
        out[:n] = np.dot(M, v) + (h / 2) * grad - p_k
        out[n] = (v * np.dot(M, v)).sum() / 2 + model.potential(mid) - E_k
        return out

    def jacobian(z):
        dq, h = z[:n], z[n]
        v = dq / h
        mid = q_k + dq / 2
        grad = model.potential_gradient(mid)
        hess = model.potential_hessian(mid)
        Mv = np.dot(M, v)
        J = np.empty((n + 1, n + 1), dtype=z.dtype)
        J[:n, :n] = M / h + (h / 4) * hess
        J[:n, n] = -Mv / h + grad / 2
        J[n, :n] = Mv / h + grad / 2
        J[n, n] = -(v * Mv).sum() / h
        return J

    return residual, jacobian


def epavi_step(model: LagrangianModel, state: ExtendedState, h_guess, cfg: SolverConfig):
    """One energy-preserving adaptive step.

    Solves the implicit pair for (q_{k+1}, t_{k+1}) with the explicit-Euler
    predictor (t_k + h_guess, q_k + h_guess M^{-1} p_k), then applies the
    explicit momentum/energy updates.  If Newton fails, retries once from
    h_guess/2 before giving up.
    """
    if h_guess <= 0:
        raise ConfigurationError("h_guess must be positive")
    ctx = model.ctx
    n = model.n
    residual, jacobian = _epavi_system(model, state)

    report = None
    with ctx.activate():
        for attempt, hg in enumerate((h_guess, h_guess / 2)):
            z0 = np.empty(n + 1, dtype=float if ctx.is_native else object)
            z0[:n] = hg * np.dot(model.M_inv, state.p)
            z0[n] = hg * (1 if ctx.is_native else ctx.real(1))
            try:
                report = newton_solve(
                    residual, z0, cfg, ctx, jacobian=jacobian, feasible=lambda z: z[n] > 0
                )
                break
            except NonconvergenceError:
                if attempt == 1:
                    raise
        dq, h = report.solution[:n], report.solution[n]
        parts = _increment_partials(model, state.q, dq, h)
        new_state = ExtendedState(t=state.t + h, q=state.q + dq, p=parts.d4, E=-parts.d3)

    record = StepRecord(
        h=h,
        residual_norm=report.residual_norm,
        iterations=report.iterations,
        condition_estimate=report.condition_estimate,
        stalled=report.stalled,
    )
    return new_state, record


def initial_discrete_energy(model: LagrangianModel, state: ExtendedState, h0, cfg: SolverConfig) -> Real:
    """Discrete energy level consistent with a first step of size h0.

    At exactly consistent data (E = H(q, p)) the coupled step system admits
    only the degenerate h -> 0 solution, so a run must first fix the energy
    level: solve the momentum equation alone over a step of size h0 and
    evaluate D1 L_d there.  Every subsequent coupled step then reproduces
    this level, and its first solution lands on h = h0.
    """
    with model.ctx.activate():
        dq = _solve_fixed_momentum(model, state, h0, cfg)
        return _increment_partials(model, state.q, dq, h0).d1


def epavi_run(
    model: LagrangianModel,
    state0: ExtendedState,
    h0,
    T_final,
    cfg: Optional[SolverConfig] = None,
    init_energy: bool = True,
) -> Trajectory:
    """March EpAVI steps until t >= T_final.

    The Newton guess for each step is the previously accepted h (h0 for the
    first).  With ``init_energy`` the starting state's E is replaced by the
    h0-consistent discrete level (see :func:`initial_discrete_energy`);
    disable it only when continuing from an earlier run.
    """
    cfg = cfg or SolverConfig.for_context(model.ctx)
    state0.validate(model.n)
    if T_final < state0.t:
        raise ConfigurationError("T_final must not precede the initial time")

    if init_energy and T_final > state0.t:
        try:
            state0 = replace(state0, E=initial_discrete_energy(model, state0, h0, cfg))
        except VarintError as exc:
            raise IntegrationError(
                f"epavi energy initialization failed: {exc}",
                trajectory=Trajectory(states=[state0]),
                cause=exc,
            ) from exc

    traj = Trajectory(
        states=[state0],
        meta={
            "integrator": "epavi",
            "model": model.name,
            "params": dict(model.params),
            "h0": float(h0),
            "T_final": float(T_final),
            "tol": float(cfg.tol),
            "digits": model.ctx.digits,
        },
    )
    state, h_guess = state0, h0
    while state.t < T_final:
        try:
            state, record = epavi_step(model, state, h_guess, cfg)
            _check_step_underflow(model, state, record)
        except VarintError as exc:
            raise IntegrationError(
                f"epavi run aborted at t = {float(state.t):.6g} after "
                f"{len(traj.steps)} steps: {exc}",
                trajectory=traj,
                cause=exc,
            ) from exc
        traj.states.append(state)
        traj.steps.append(record)
        h_guess = record.h
    return traj


def _check_step_underflow(model, state, record):
    # a step below resolution means the adaptation collapsed (e.g. a monitor
    # decaying to zero); abort instead of looping towards t = const
    if record.h < 64 * model.ctx.eps * (1 + abs(float(state.t))):
        raise NonMonotoneTimeError(f"time step {float(record.h):.3e} underflowed at t = {float(state.t):.6g}")


# -- fixed-step implicit midpoint (Lagrangian form) -------------------------------


def _solve_fixed_momentum(model, state, h, cfg):
    """Solve -D2 L_d = p_k for the configuration increment at fixed h."""
    n = model.n
    M, p_k, q_k = model.M, state.p, state.q

    def residual(dq):
        v = dq / h
        mid = q_k + dq / 2
        return np.dot(M, v) + (h / 2) * model.potential_gradient(mid) - p_k

    def jacobian(dq):
        mid = q_k + dq / 2
        return M / h + (h / 4) * model.potential_hessian(mid)

    z0 = h * np.dot(model.M_inv, p_k)
    report = newton_solve(residual, z0, cfg, model.ctx, jacobian=jacobian)
    return report.solution


def midpoint_fixed_step(model: LagrangianModel, state: ExtendedState, h, cfg: SolverConfig):
    """One fixed-step variational midpoint step; E is reported as H(q, p)."""
    if h <= 0:
        raise ConfigurationError("step size must be positive")
    with model.ctx.activate():
        dq = _solve_fixed_momentum(model, state, h, cfg)
        parts = _increment_partials(model, state.q, dq, h)
        q1 = state.q + dq
        p1 = parts.d4
        new_state = ExtendedState(t=state.t + h, q=q1, p=p1, E=model.hamiltonian(q1, p1))
        v = dq / h
        res = inf_norm(np.dot(model.M, v) + (h / 2) * model.potential_gradient(state.q + dq / 2) - state.p)
    return new_state, StepRecord(h=h, residual_norm=res, iterations=0)


def midpoint_fixed_run(model, state0, h, T_final, cfg=None) -> Trajectory:
    cfg = cfg or SolverConfig.for_context(model.ctx)
    state0.validate(model.n)
    traj = Trajectory(
        states=[state0],
        meta={
            "integrator": "midpoint_fixed",
            "model": model.name,
            "params": dict(model.params),
            "h0": float(h),
            "T_final": float(T_final),
            "tol": float(cfg.tol),
            "digits": model.ctx.digits,
        },
    )
    state = state0
    while state.t < T_final:
        try:
            state, record = midpoint_fixed_step(model, state, h, cfg)
        except VarintError as exc:
            raise IntegrationError(
                f"midpoint run aborted after {len(traj.steps)} steps: {exc}",
                trajectory=traj,
                cause=exc,
            ) from exc
        traj.states.append(state)
        traj.steps.append(record)
    return traj


# -- monitor functions -------------------------------------------------------------


def monitor_arclength(model: LagrangianModel, q, H0) -> Real:
    """Arclength monitor g1 = (2(H0 - V) + grad V' M^{-1} grad V)^(-1/2)."""
    grad = model.potential_gradient(q)
    radicand = 2 * (H0 - model.potential(q)) + (grad * np.dot(model.M_inv, grad)).sum()
    if radicand <= 0:
        raise MonitorDomainError(f"arclength monitor radicand {radicand} is not positive")
    return 1 / model.ctx.sqrt(radicand)


def monitor_kepler(q) -> Real:
    """Second-law monitor g2 = q'q (vanishes only at the origin)."""
    return (q * q).sum()


class Monitor:
    """Positive time-reparametrization density dt/da = g(q)."""

    identifier = "unit"

    def __call__(self, q) -> Real:
        return 1


class UnitMonitor(Monitor):
    identifier = "unit"


class ArclengthMonitor(Monitor):
    identifier = "g1"

    def __init__(self, model: LagrangianModel, H0):
        self.model = model
        self.H0 = H0

    def __call__(self, q) -> Real:
        return monitor_arclength(self.model, q, self.H0)


class KeplerMonitor(Monitor):
    identifier = "g2"

    def __call__(self, q) -> Real:
        return monitor_kepler(q)


def make_monitor(name: str, model: LagrangianModel, state0: ExtendedState) -> Monitor:
    key = {"g1": "g1", "arclength": "g1", "g2": "g2", "kepler": "g2", "unit": "unit"}.get(name)
    if key == "g1":
        return ArclengthMonitor(model, model.hamiltonian(state0.q, state0.p))
    if key == "g2":
        return KeplerMonitor()
    if key == "unit":
        return UnitMonitor()
    raise ConfigurationError(f"unknown monitor {name!r}")


# -- AVI ----------------------------------------------------------------------------


def avi_step(
    model: LagrangianModel,
    monitor: Monitor,
    state: ExtendedState,
    p_t,
    delta_a,
    cfg: SolverConfig,
):
    """One implicit-midpoint step of the monitor-rescaled system.

    Unknowns are the increments (dq, dp); the physical-time update
    t_{k+1} = t_k + da * g(q_av) is explicit afterwards.  ``p_t`` (held at
    -H(q_0, p_0)) does not enter the update equations; it is the conserved
    momentum conjugate to physical time in the transformed picture.
    """
    if delta_a <= 0:
        raise ConfigurationError("delta_a must be positive")
    ctx = model.ctx
    n = model.n
    q_k, p_k = state.q, state.p

    def residual(z):
        dq, dp = z[:n], z[n:]
        q_av = q_k + dq / 2
        p_av = p_k + dp / 2
        g = monitor(q_av)
        if g <= 0:
            raise MonitorDomainError(f"monitor value {g} is not positive")
        out = np.empty(2 * n, dtype=z.dtype)
        out[:n] = dq / delta_a - g * np.dot(model.M_inv, p_av)
        out[n:] = dp / delta_a + g * model.potential_gradient(q_av)
        return out

    with ctx.activate():
        g0 = monitor(q_k)
        if g0 <= 0:
            raise MonitorDomainError(f"monitor value {g0} at the step start is not positive")
        z0 = np.empty(2 * n, dtype=float if ctx.is_native else object)
        z0[:n] = delta_a * g0 * np.dot(model.M_inv, p_k)
        z0[n:] = -delta_a * g0 * model.potential_gradient(q_k)
        report = newton_solve(residual, z0, cfg, ctx)
        dq, dp = report.solution[:n], report.solution[n:]
        h = delta_a * monitor(q_k + dq / 2)
        if h <= 0:
            raise NonMonotoneTimeError(f"monitor produced a non-positive time step {h}")
        q1, p1 = q_k + dq, p_k + dp
        new_state = ExtendedState(t=state.t + h, q=q1, p=p1, E=model.hamiltonian(q1, p1))

    record = StepRecord(
        h=h,
        residual_norm=report.residual_norm,
        iterations=report.iterations,
        delta_a=delta_a,
        condition_estimate=report.condition_estimate,
        stalled=report.stalled,
    )
    return new_state, record


def avi_calibrate_delta_a(model, monitor, state0, h0, cfg: Optional[SolverConfig] = None) -> Real:
    """Fictitious step giving a first physical step of h0 (within 1%).

    Starts from da = h0 / g(q_0) and refines with implicit solves until the
    realized first step matches h0 to one percent.
    """
    cfg = cfg or SolverConfig.for_context(model.ctx)
    if h0 <= 0:
        raise ConfigurationError("h0 must be positive")
    with model.ctx.activate():
        g0 = monitor(state0.q)
        if g0 <= 0:
            raise MonitorDomainError(f"monitor value {g0} at the initial state is not positive")
        delta_a = h0 / g0
        p_t = -model.hamiltonian(state0.q, state0.p)
        for _ in range(5):
            _, record = avi_step(model, monitor, state0, p_t, delta_a, cfg)
            if abs(record.h - h0) <= 0.01 * h0:
                break
            delta_a = delta_a * (h0 / record.h)
    return delta_a


def avi_run(
    model: LagrangianModel,
    monitor: Monitor,
    state0: ExtendedState,
    T_final,
    cfg: Optional[SolverConfig] = None,
    h0=None,
    delta_a=None,
) -> Trajectory:
    """Fixed-da monitor-adaptive run until t >= T_final.

    ``delta_a`` may be given directly; otherwise it is calibrated so the
    first physical step matches ``h0``.  Recorded energies are H(q_k, p_k).
    """
    cfg = cfg or SolverConfig.for_context(model.ctx)
    state0.validate(model.n)
    if delta_a is None:
        if h0 is None:
            raise ConfigurationError("avi_run needs either h0 or delta_a")
        delta_a = avi_calibrate_delta_a(model, monitor, state0, h0, cfg)
    if T_final < state0.t:
        raise ConfigurationError("T_final must not precede the initial time")

    with model.ctx.activate():
        state0 = replace(state0, E=model.hamiltonian(state0.q, state0.p))
        p_t = -state0.E
    traj = Trajectory(
        states=[state0],
        meta={
            "integrator": f"avi_{monitor.identifier}",
            "model": model.name,
            "params": dict(model.params),
            "monitor": monitor.identifier,
            "h0": float(h0) if h0 is not None else float(delta_a),
            "delta_a": float(delta_a),
            "T_final": float(T_final),
            "tol": float(cfg.tol),
            "digits": model.ctx.digits,
        },
    )
    state = state0
    while state.t < T_final:
        try:
            state, record = avi_step(model, monitor, state, p_t, delta_a, cfg)
            _check_step_underflow(model, state, record)
        except VarintError as exc:
            raise IntegrationError(
                f"avi run aborted at t = {float(state.t):.6g} after "
                f"{len(traj.steps)} steps: {exc}",
                trajectory=traj,
                cause=exc,
            ) from exc
        traj.states.append(state)
        traj.steps.append(record)
    return traj


# -- dense reference solution --------------------------------------------------------


class ReferenceSolution:
    """Dense high-accuracy trajectory of Hamilton's equations.

    Backed by an adaptive embedded Runge-Kutta pair of order 5(4) with a
    quartic dense-output interpolant; evaluable at arbitrary times within
    the solved span.
    """

    def __init__(self, model, t0, t1, sol, y0):
        self._model = model
        self.t_min = t0
        self.t_max = t1
        self._sol = sol
        self._y0 = y0
        self.n = model.n

    def eval(self, t):
        """(q, p) at physical time t (vectorized over an array of times)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.t_min - 1e-12) or np.any(t_arr > self.t_max + 1e-12):
            raise ConfigurationError(
                f"query time outside the reference span [{self.t_min}, {self.t_max}]"
            )
        if self._sol is None:
            y = np.tile(self._y0[:, None], (1, t_arr.size)) if t_arr.ndim else self._y0
        else:
            y = self._sol(np.clip(t_arr, self.t_min, self.t_max))
        return y[: self.n], y[self.n:]

    def state(self, t) -> ExtendedState:
        q, p = self.eval(float(t))
        return ExtendedState(t=float(t), q=q, p=p, E=self._model.hamiltonian(q, p))


def reference_solve(model, state0: ExtendedState, T_final, reltol=1e-12, abstol=1e-14) -> ReferenceSolution:
    """High-accuracy adaptive Runge-Kutta reference for Hamilton's equations."""
    if reltol <= 0 or abstol <= 0:
        raise ConfigurationError("tolerances must be positive")
    if not model.ctx.is_native:
        model = make_model(model.name, model.params, DOUBLE)
    t0 = float(state0.t)
    y0 = np.concatenate([np.asarray(state0.q, dtype=float), np.asarray(state0.p, dtype=float)])
    if T_final < t0:
        raise ConfigurationError("T_final must not precede the initial time")
    if T_final == t0:
        return ReferenceSolution(model, t0, t0, None, y0)

    n = model.n

    def rhs(t, y):
        q, p = y[:n], y[n:]
        return np.concatenate([np.dot(model.M_inv, p), -model.potential_gradient(q)])

    sol = solve_ivp(
        rhs, (t0, float(T_final)), y0, method="RK45",
        rtol=reltol, atol=abstol, dense_output=True,
    )
    if not sol.success:
        raise StiffnessError(f"reference solver failed: {sol.message}")
    return ReferenceSolution(model, t0, float(T_final), sol.sol, y0)
