"""Damped Newton iteration for the implicit per-step equations.

The update equations of the adaptive integrators are ill-conditioned near
degenerate points, so every solve carries a condition estimate of its
Jacobian and singularity is reported as a distinct error.  In double
precision the residual of the energy equation bottoms out a few ulp above
zero; the solver therefore accepts a stalled iterate whose residual lies
within ``stall_factor`` of the tolerance instead of looping forever.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import mpmath
import numpy as np

from .errors import (
    IllPosednessError,
    MonitorDomainError,
    NonconvergenceError,
    SingularityError,
)
from .precision import DOUBLE, PrecisionContext, Real, inf_norm

#: Domain errors that mark a trial point as infeasible during damping.
_DOMAIN_ERRORS = (SingularityError, MonitorDomainError)


@dataclass(frozen=True)
class SolverConfig:
    """Newton solve parameters.

    ``fd_step`` of ``None`` selects eps(context)^(1/3), the standard
    central-difference optimum; the per-coordinate step is scaled by
    (1 + |x_j|).  After the tolerance is met, up to ``polish`` further
    improving iterations are taken so per-step defects sit at the
    representation floor rather than just under ``tol``.
    """

    tol: float = 1e-12
    max_iter: int = 50
    fd_step: Optional[float] = None
    condition_warn: float = 1e12
    polish: int = 2
    stall_factor: float = 10.0
    max_halvings: int = 10

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or (self.fd_step is not None and self.fd_step <= 0):
            raise ValueError("need tol > 0, max_iter >= 1, fd_step > 0")

    @classmethod
    def for_context(cls, ctx: PrecisionContext, **overrides) -> "SolverConfig":
        """Context default: tol 1e-12 in double, 1e-17 in extended precision."""
        tol = 1e-12 if ctx.is_native else 1e-17
        cfg = cls(tol=tol)
        return replace(cfg, **overrides) if overrides else cfg

    def resolved_fd_step(self, ctx: PrecisionContext) -> float:
        return self.fd_step if self.fd_step is not None else ctx.eps ** (1.0 / 3.0)


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: Real
    iterations: int
    condition_estimate: float
    converged: bool = True
    stalled: bool = False
    condition_warning: bool = False


def fd_jacobian(F: Callable, x: np.ndarray, fd_step, ctx: PrecisionContext = DOUBLE) -> np.ndarray:
    """Central-difference Jacobian, J[i, j] = (F_i(x+d e_j) - F_i(x-d e_j)) / 2d."""
    n = len(x)
    cols = []
    for j in range(n):
        d = fd_step * (1 + abs(x[j]))
        xp = x.copy()
        xp[j] = x[j] + d
        xm = x.copy()
        xm[j] = x[j] - d
        cols.append((F(xp) - F(xm)) / (2 * d))
    J = np.empty((len(cols[0]), n), dtype=object if not ctx.is_native else float)
    for j, col in enumerate(cols):
        if not all(mpmath.isfinite(c) for c in col):
            raise NonconvergenceError(f"non-finite residual while differencing column {j}")
        J[:, j] = col
    return J


def newton_solve(
    F: Callable,
    x0: np.ndarray,
    cfg: SolverConfig,
    ctx: PrecisionContext = DOUBLE,
    jacobian: Optional[Callable] = None,
    feasible: Optional[Callable] = None,
) -> SolveReport:
    """Solve F(x) = 0 by damped Newton iteration.

    ``jacobian(x)`` supplies analytic partials when the caller has them;
    otherwise a central-difference Jacobian is formed.  ``feasible(x)``
    restricts the damping line search to an admissible region (used by the
    steppers to keep the time increment positive).  Domain errors raised by
    ``F`` at a trial point likewise mark it infeasible.

    Raises :class:`NonconvergenceError` when the iteration budget runs out
    or the residual stalls far from the tolerance, and
    :class:`IllPosednessError` when the Jacobian is singular or its
    condition estimate reaches the reciprocal working precision.
    """
    with ctx.activate():
        return _newton_solve(F, x0, cfg, ctx, jacobian, feasible)


def _newton_solve(F, x0, cfg, ctx, jacobian, feasible):
    fd_step = cfg.resolved_fd_step(ctx)
    jac = jacobian if jacobian is not None else (lambda x: fd_jacobian(F, x, fd_step, ctx))
    cond_limit = 0.01 / ctx.eps

    x = x0.copy()
    Fx = F(x)
    if not all(mpmath.isfinite(c) for c in Fx):
        raise NonconvergenceError("residual not finite at the initial guess")
    r = inf_norm(Fx)

    J = None
    iterations = 0
    polish_left = cfg.polish
    stalled = False

    while iterations < cfg.max_iter:
        if r <= cfg.tol and polish_left <= 0:
            break
        J = jac(x)
        dx = -ctx.solve(J, Fx)

        # damping: halve the step while the residual norm does not decrease
        lam = 1
        best = None
        for _ in range(cfg.max_halvings + 1):
            xn = x + lam * dx
            lam = lam / 2
            if feasible is not None and not feasible(xn):
                continue
            try:
                Fn = F(xn)
            except _DOMAIN_ERRORS:
                continue
            if not all(mpmath.isfinite(c) for c in Fn):
                continue
            rn = inf_norm(Fn)
            if best is None or rn < best[2]:
                best = (xn, Fn, rn)
            if rn < r:
                break

        if best is None or best[2] >= r:
            stalled = True
            break
        x, Fx, r = best
        iterations += 1
        if r <= cfg.tol:
            polish_left -= 1

    if J is None:
        J = jac(x)
    cond = ctx.cond_inf(J)
    if cond >= cond_limit:
        raise IllPosednessError(
            f"Jacobian condition estimate {cond:.2e} at the solution; "
            "the update equations do not determine the unknowns"
        )

    report = SolveReport(
        solution=x,
        residual_norm=r,
        iterations=iterations,
        condition_estimate=cond,
        converged=r <= cfg.tol,
        stalled=stalled and r > cfg.tol,
        condition_warning=cond > cfg.condition_warn,
    )
    if r <= cfg.tol:
        return report
    if stalled and r <= cfg.stall_factor * cfg.tol:
        # residual floor of the representation; accept and report honestly
        return report
    raise NonconvergenceError(
        f"no convergence: residual {float(r):.3e} after {iterations} iterations "
        f"(tol {float(cfg.tol):.1e})",
        report=report,
    )
