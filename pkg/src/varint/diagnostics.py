"""Post-run analysis: energy error series, telescoping bound, trajectory
error against the dense reference, and time-adaptation statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError
from .integrators import ReferenceSolution, Trajectory
from .models import LagrangianModel
from .precision import DOUBLE, PrecisionContext, with_precision


@dataclass
class ErrorSeries:
    """Non-negative error values against strictly increasing sample times."""

    times: np.ndarray
    values: list
    label: str = ""

    def max(self) -> float:
        return max(float(v) for v in self.values)


@dataclass
class StepStats:
    mean_h: float
    max_h: float
    min_h: float
    mean_ratio: float
    max_ratio: float
    n_steps: int


@dataclass
class TelescopingReport:
    """Final |E_N - E_0| against N * max_i |E_i - E_{i-1}|, plus whether the
    bound held at every intermediate step (an arithmetic identity)."""

    lhs: float
    rhs: float
    holds: bool
    max_step_defect: float


def energy_error_series(traj: Trajectory) -> ErrorSeries:
    """|E_k - E_0| at every recorded state (AVI stores E_k = H(q_k, p_k))."""
    if not traj.states:
        raise ConfigurationError("empty trajectory")
    E0 = traj.states[0].E
    return ErrorSeries(
        times=traj.times(),
        values=[abs(s.E - E0) for s in traj.states],
        label="energy_error",
    )


def hamiltonian_error_series(traj: Trajectory, model: LagrangianModel) -> ErrorSeries:
    """|H(q_k, p_k) - H(q_0, p_0)|, reported alongside the discrete-energy
    error for the energy-preserving runs."""
    if not traj.states:
        raise ConfigurationError("empty trajectory")
    with model.ctx.activate():
        H0 = model.hamiltonian(traj.states[0].q, traj.states[0].p)
        values = [abs(model.hamiltonian(s.q, s.p) - H0) for s in traj.states]
    return ErrorSeries(times=traj.times(), values=values, label="hamiltonian_error")


def telescoping_bound_check(traj: Trajectory) -> TelescopingReport:
    if len(traj.states) < 2:
        raise ConfigurationError("telescoping check needs at least two states")
    E = traj.energies()
    E0 = E[0]
    holds = True
    max_defect = 0 * abs(E[1] - E[0])
    for k in range(1, len(E)):
        defect = abs(E[k] - E[k - 1])
        if defect > max_defect:
            max_defect = defect
        lhs_k = abs(E[k] - E0)
        if lhs_k > k * max_defect:
            holds = False
    return TelescopingReport(
        lhs=float(abs(E[-1] - E0)),
        rhs=float((len(E) - 1) * max_defect),
        holds=holds,
        max_step_defect=float(max_defect),
    )


def trajectory_error(traj: Trajectory, reference: ReferenceSolution) -> List[ErrorSeries]:
    """Per-coordinate |q_k^i - q_ref^i(t_k)| at the discrete times."""
    times = traj.times()
    q_ref, _ = reference.eval(times)
    series = []
    for i in range(reference.n):
        vals = [abs(float(s.q[i]) - q_ref[i, k]) for k, s in enumerate(traj.states)]
        series.append(ErrorSeries(times=times, values=vals, label=f"q{i + 1}_error"))
    return series


def timestep_stats(traj: Trajectory) -> StepStats:
    if len(traj.states) < 2:
        raise ConfigurationError("step statistics need at least one step")
    hs = traj.step_sizes()
    h0 = traj.meta.get("h0", hs[0])
    # elapsed time over step count, clamped against summation roundoff so
    # min <= mean <= max holds exactly
    mean_h = float((traj.states[-1].t - traj.states[0].t) / len(hs))
    mean_h = min(max(mean_h, float(hs.min())), float(hs.max()))
    return StepStats(
        mean_h=mean_h,
        max_h=float(hs.max()),
        min_h=float(hs.min()),
        mean_ratio=mean_h / h0,
        max_ratio=float(hs.max()) / h0,
        n_steps=len(hs),
    )


# -- CSV output -----------------------------------------------------------------


def _fmt(value, ctx: PrecisionContext) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return ctx.format(value)


def write_csv(path, header, rows, ctx: PrecisionContext = DOUBLE):
    """Write rows of mixed values; reals in the context's scientific format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, ctx) for v in row])


def context_for(traj: Trajectory) -> PrecisionContext:
    return with_precision(int(traj.meta.get("digits", 16)))


def write_trajectory_csv(traj: Trajectory, path):
    """k, t, q..., p..., E, h, residual, newton_iters; the step columns of
    row k describe the step from state k to state k+1."""
    ctx = context_for(traj)
    n = len(traj.states[0].q)
    header = (
        ["k", "t"]
        + [f"q{i + 1}" for i in range(n)]
        + [f"p{i + 1}" for i in range(n)]
        + ["E", "h", "residual", "newton_iters"]
    )
    rows = []
    for k, s in enumerate(traj.states):
        step = traj.steps[k] if k < len(traj.steps) else None
        rows.append(
            [k, s.t, *s.q, *s.p, s.E]
            + ([step.h, step.residual_norm, step.iterations] if step else [None, None, None])
        )
    write_csv(path, header, rows, ctx)


def write_error_series_csv(series_list: List[ErrorSeries], path, ctx: PrecisionContext = DOUBLE):
    header = ["k", "t"] + [s.label or f"series{i}" for i, s in enumerate(series_list)]
    times = series_list[0].times
    rows = [
        [k, times[k]] + [s.values[k] for s in series_list]
        for k in range(len(times))
    ]
    write_csv(path, header, rows, ctx)


def write_stats_csv(traj: Trajectory, path, extra: Optional[dict] = None):
    ctx = context_for(traj)
    stats = timestep_stats(traj)
    tele = telescoping_bound_check(traj)
    row = {
        "n_steps": stats.n_steps,
        "mean_h": stats.mean_h,
        "max_h": stats.max_h,
        "min_h": stats.min_h,
        "mean_ratio": stats.mean_ratio,
        "max_ratio": stats.max_ratio,
        "max_energy_error": energy_error_series(traj).max(),
        "max_step_defect": tele.max_step_defect,
        "telescoping_lhs": tele.lhs,
        "telescoping_rhs": tele.rhs,
        "telescoping_holds": tele.holds,
    }
    if extra:
        row.update(extra)
    write_csv(path, list(row.keys()), [list(row.values())], ctx)
