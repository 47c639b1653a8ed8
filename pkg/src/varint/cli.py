"""Batch experiment runner.

``varint run --config <file> [key=value ...]`` executes one configured run
and writes CSV diagnostics, a key=value summary, and a standalone plot
script into the output directory.  ``varint suite <name>`` runs a named
bundle of experiments concurrently and adds a cross-run comparison CSV.
Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bea, diagnostics
from .errors import ConfigurationError, IntegrationError, VarintError
from .integrators import (
    avi_run,
    epavi_run,
    make_monitor,
    midpoint_fixed_run,
    reference_solve,
)
from .models import initial_state, make_model, model_names
from .precision import with_precision
from .solvers import SolverConfig

KEPLER_PERIOD = 2 * math.pi

INTEGRATOR_NAMES = ("epavi", "avi1", "avi2", "midpoint_fixed", "reference")

SUITE_NAMES = ("fig_e01", "fig_e07", "vpa_study", "bea_orders", "h0_sensitivity")


@dataclass
class ExperimentConfig:
    """One run: problem + parameters, integrator, stepping and solver knobs."""

    problem: str = "kepler"
    e: float = 0.1
    k: float = 1.0
    m: float = 1.0
    q0: float = 1.0
    p0: float = 0.0
    integrator: str = "epavi"
    h0: float = 0.001
    delta_a: Optional[float] = None
    T_final: Optional[float] = None
    periods: Optional[float] = None
    tol: Optional[float] = None
    max_iter: int = 50
    fd_step: Optional[float] = None
    condition_warn: float = 1e12
    digits: int = 16
    outdir: str = "out"
    seed: int = 0
    reference: bool = True
    reltol: float = 1e-12
    abstol: float = 1e-14

    def validate(self) -> "ExperimentConfig":
        if self.problem not in model_names():
            raise ConfigurationError(f"unknown problem {self.problem!r}; known: {model_names()}")
        if self.integrator not in INTEGRATOR_NAMES:
            raise ConfigurationError(
                f"unknown integrator {self.integrator!r}; known: {list(INTEGRATOR_NAMES)}"
            )
        if self.h0 <= 0:
            raise ConfigurationError("h0 must be positive")
        if self.periods is not None and self.problem != "kepler":
            raise ConfigurationError("periods is only defined for the kepler problem")
        if self.final_time() <= 0:
            raise ConfigurationError("T_final must be positive")
        if self.digits < 10:
            raise ConfigurationError("digits must be at least 10")
        if self.tol is not None and self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        return self

    def final_time(self) -> float:
        if self.T_final is not None:
            return float(self.T_final)
        if self.periods is not None:
            return float(self.periods) * KEPLER_PERIOD
        if self.problem == "kepler":
            return KEPLER_PERIOD
        return 2 * math.pi

    def model_params(self) -> dict:
        if self.problem == "kepler":
            return {"e": self.e}
        if self.problem == "oscillator":
            return {"k": self.k, "m": self.m, "q0": self.q0, "p0": self.p0}
        return {"m": self.m, "q0": self.q0, "p0": self.p0}

    def as_lines(self) -> List[str]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out.append(f"{f.name}={v}")
        return out


_BOOL_KEYS = {"reference"}
_INT_KEYS = {"max_iter", "digits", "seed"}
_STR_KEYS = {"problem", "integrator", "outdir"}


def _parse_value(key: str, raw: str):
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"cannot parse boolean {key}={raw!r}")
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        raise ConfigurationError(f"cannot parse {key}={raw!r}") from None


def parse_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> ExperimentConfig:
    """Flat key=value file plus command-line overrides."""
    values = {}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}

    def ingest(line, origin):
        line = line.split("#", 1)[0].strip()
        if not line:
            return
        if "=" not in line:
            raise ConfigurationError(f"{origin}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"{origin}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)

    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            ingest(line, f"{path}:{lineno}")
    for item in overrides or []:
        ingest(item, "override")
    return ExperimentConfig(**values).validate()


# -- single experiment -------------------------------------------------------------


def _solver_config(cfg: ExperimentConfig, ctx) -> SolverConfig:
    overrides = {"max_iter": cfg.max_iter, "condition_warn": cfg.condition_warn}
    if cfg.tol is not None:
        overrides["tol"] = cfg.tol
    if cfg.fd_step is not None:
        overrides["fd_step"] = cfg.fd_step
    return SolverConfig.for_context(ctx, **overrides)


def _run_integrator(cfg: ExperimentConfig, model, state0, scfg):
    T = cfg.final_time()
    name = cfg.integrator
    if name == "epavi":
        return epavi_run(model, state0, cfg.h0, T, scfg)
    if name == "midpoint_fixed":
        return midpoint_fixed_run(model, state0, cfg.h0, T, scfg)
    if name in ("avi1", "avi2"):
        monitor = make_monitor("g1" if name == "avi1" else "g2", model, state0)
        return avi_run(model, monitor, state0, T, scfg, h0=cfg.h0, delta_a=cfg.delta_a)
    raise ConfigurationError(f"integrator {name} is not trajectory-producing here")


def _reference_trajectory_outputs(cfg, model, state0, outdir, ctx):
    """`reference` as the configured integrator: dense solve, sampled CSV."""
    ref = reference_solve(model, state0, cfg.final_time(), cfg.reltol, cfg.abstol)
    times = np.linspace(ref.t_min, ref.t_max, 2001)
    rows = []
    H0 = model.hamiltonian(state0.q, state0.p)
    max_drift = 0.0
    for k, t in enumerate(times):
        q, p = ref.eval(t)
        H = model.hamiltonian(q, p)
        max_drift = max(max_drift, abs(float(H - H0)))
        rows.append([k, t, *q, *p, H])
    header = ["k", "t"] + [f"q{i+1}" for i in range(model.n)] + [f"p{i+1}" for i in range(model.n)] + ["E"]
    diagnostics.write_csv(outdir / "trajectory.csv", header, rows, ctx)
    return {
        "n_steps": len(times) - 1,
        "max_energy_error": max_drift,
        "success": True,
    }


def run_experiment(cfg: ExperimentConfig, outdir: Optional[Path] = None) -> dict:
    """Execute one configured run and write its output bundle.

    Returns the machine-readable summary (also written as summary.txt).
    Integrator failures produce a summary with success=False and whatever
    partial outputs exist.
    """
    cfg.validate()
    outdir = Path(outdir if outdir is not None else cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text("\n".join(cfg.as_lines()) + "\n")

    ctx = with_precision(cfg.digits)
    model = make_model(cfg.problem, cfg.model_params(), ctx)
    state0 = initial_state(cfg.problem, cfg.model_params(), ctx)
    scfg = _solver_config(cfg, ctx)

    summary = {
        "problem": cfg.problem,
        "integrator": cfg.integrator,
        "h0": cfg.h0,
        "tol": scfg.tol,
        "digits": cfg.digits,
        "T_final": cfg.final_time(),
        "seed": cfg.seed,
    }
    started = time.perf_counter()
    try:
        if cfg.integrator == "reference":
            summary.update(_reference_trajectory_outputs(cfg, model, state0, outdir, ctx))
        else:
            traj = None
            try:
                traj = _run_integrator(cfg, model, state0, scfg)
            except IntegrationError as exc:
                summary.update(success=False, error=str(exc))
                traj = exc.trajectory
                if traj is None or len(traj) < 2:
                    raise
            else:
                summary["success"] = True
            _trajectory_outputs(cfg, model, traj, outdir, ctx, summary)
    except VarintError as exc:
        summary.setdefault("success", False)
        summary["error"] = str(exc)
    summary["wall_time_s"] = round(time.perf_counter() - started, 3)

    _write_summary(outdir / "summary.txt", summary)
    (outdir / "plot.py").write_text(_PLOT_SCRIPT)
    return summary


def _trajectory_outputs(cfg, model, traj, outdir, ctx, summary):
    diagnostics.write_trajectory_csv(traj, outdir / "trajectory.csv")
    e_series = diagnostics.energy_error_series(traj)
    h_series = diagnostics.hamiltonian_error_series(traj, model)
    diagnostics.write_error_series_csv([e_series, h_series], outdir / "energy_error.csv", ctx)

    if len(traj) > 1:
        stats = diagnostics.timestep_stats(traj)
        tele = diagnostics.telescoping_bound_check(traj)
        diagnostics.write_stats_csv(traj, outdir / "stats.csv")
        summary.update(
            n_steps=stats.n_steps,
            mean_step_ratio=stats.mean_ratio,
            max_step_ratio=stats.max_ratio,
            max_energy_error=e_series.max(),
            max_hamiltonian_error=h_series.max(),
            max_step_defect=tele.max_step_defect,
            telescoping_holds=tele.holds,
            stalled_steps=sum(1 for s in traj.steps if s.stalled),
            max_residual=max(float(s.residual_norm) for s in traj.steps),
        )

    if cfg.reference and len(traj) > 1:
        ref = reference_solve(model, traj.states[0], float(traj.states[-1].t), cfg.reltol, cfg.abstol)
        err = diagnostics.trajectory_error(traj, ref)
        diagnostics.write_error_series_csv(err, outdir / "traj_error.csv", ctx)
        for s in err:
            summary[f"max_{s.label}"] = s.max()


def _write_summary(path: Path, summary: dict):
    lines = [f"{key}={summary[key]}" for key in sorted(summary)]
    path.write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            out[key] = val
    return out


# -- suites -------------------------------------------------------------------------


def _figure_suite_members(e: float) -> List[ExperimentConfig]:
    base = dict(problem="kepler", e=e, h0=0.001, periods=1.0)
    return [
        ExperimentConfig(integrator="epavi", tol=1e-15, **base),
        ExperimentConfig(integrator="avi1", tol=1e-13, **base),
        ExperimentConfig(integrator="avi2", tol=1e-13, **base),
    ]


def _vpa_members() -> List[ExperimentConfig]:
    base = dict(problem="kepler", e=0.7, h0=0.01, periods=1.0, integrator="epavi", reference=False)
    return [
        ExperimentConfig(digits=16, tol=1e-15, **base),
        ExperimentConfig(digits=18, tol=1e-15, **base),
        ExperimentConfig(digits=18, tol=1e-16, **base),
        ExperimentConfig(digits=18, tol=1e-17, **base),
    ]


def _h0_members() -> List[ExperimentConfig]:
    base = dict(problem="kepler", e=0.7, periods=1.0, reference=False)
    return [
        ExperimentConfig(integrator="epavi", h0=0.001, tol=1e-15, **base),
        ExperimentConfig(integrator="epavi", h0=0.01, tol=1e-15, **base),
        ExperimentConfig(integrator="avi2", h0=0.001, tol=1e-13, **base),
        ExperimentConfig(integrator="avi2", h0=0.01, tol=1e-13, **base),
    ]


def _member_label(cfg: ExperimentConfig) -> str:
    parts = [cfg.integrator]
    if cfg.digits != 16:
        parts.append(f"d{cfg.digits}")
    if cfg.tol is not None:
        parts.append(f"tol{cfg.tol:.0e}".replace("-0", "-"))
    if cfg.h0 != 0.001:
        parts.append(f"h{cfg.h0:g}")
    return "_".join(parts)


def _run_member(args):
    cfg, outdir = args
    try:
        return run_experiment(cfg, Path(outdir))
    except VarintError as exc:
        return {"integrator": cfg.integrator, "success": False, "error": str(exc)}


def run_suite(name: str, outdir, workers: int = 2) -> dict:
    """Run a registered experiment bundle; member failures are recorded and
    the suite continues."""
    if name not in SUITE_NAMES:
        raise ConfigurationError(f"unknown suite {name!r}; known: {list(SUITE_NAMES)}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if name == "bea_orders":
        return _run_bea_orders(outdir)

    members = {
        "fig_e01": lambda: _figure_suite_members(0.1),
        "fig_e07": lambda: _figure_suite_members(0.7),
        "vpa_study": _vpa_members,
        "h0_sensitivity": _h0_members,
    }[name]()

    jobs = [(cfg, outdir / _member_label(cfg)) for cfg in members]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_member, jobs))
    else:
        summaries = [_run_member(job) for job in jobs]

    keys = ["label", "integrator", "digits", "tol", "h0", "success", "n_steps",
            "mean_step_ratio", "max_step_ratio", "max_energy_error", "max_step_defect"]
    rows = []
    for (cfg, subdir), summary in zip(jobs, summaries):
        row = dict.fromkeys(keys, "")
        row.update({k: v for k, v in summary.items() if k in keys})
        row["label"] = Path(subdir).name
        row["digits"] = cfg.digits
        rows.append([row[k] for k in keys])
    diagnostics.write_csv(outdir / "comparison.csv", keys, rows)

    ok = all(s.get("success") for s in summaries)
    suite_summary = {"suite": name, "members": len(summaries), "success": ok}
    _write_summary(outdir / "summary.txt", suite_summary)
    return suite_summary


def _run_bea_orders(outdir: Path) -> dict:
    from .models import HarmonicOscillator, Pendulum

    cases = [
        ("oscillator", HarmonicOscillator(), bea.IdentityProfile()),
        ("pendulum", Pendulum(), bea.SineProfile(0.1)),
    ]
    rows = []
    slopes = {}
    for label, model, profile in cases:
        for flag in (False, True):
            est = bea.residual_order_estimate(model, profile, flag)
            slopes[(label, flag)] = est
            for da, el, en in est.samples:
                rows.append([label, profile.label, flag, da, el, en])
    diagnostics.write_csv(
        outdir / "bea_orders.csv",
        ["problem", "profile", "modified", "delta_a", "residual_inf_norm", "energy_residual_inf_norm"],
        rows,
    )
    summary = {"suite": "bea_orders", "success": True}
    for (label, flag), est in slopes.items():
        tag = "modified" if flag else "leading"
        summary[f"slope_{label}_{tag}"] = round(est.slope, 3)
        summary[f"slope_energy_{label}_{tag}"] = round(est.slope_energy, 3)
    for label, _, _ in cases:
        summary[f"improvement_{label}"] = round(
            slopes[(label, True)].slope - slopes[(label, False)].slope, 3
        )
    _write_summary(outdir / "summary.txt", summary)
    return summary


# -- entry point ----------------------------------------------------------------------


_PLOT_SCRIPT = '''\
"""Render the four-panel comparison plot from this run's CSV files."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt


def read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


def column(rows, key):
    return [float(r[key]) for r in rows if r.get(key)]


here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
traj = read(here / "trajectory.csv")
fig, axes = plt.subplots(2, 2, figsize=(11, 7))

ts = column(traj, "t")
if traj and traj[0].get("h"):
    axes[0, 0].plot(ts[:-1], column(traj, "h"))
axes[0, 0].set(xlabel="t", ylabel="h", title="Adaptive time step")

if (here / "energy_error.csv").exists():
    err = read(here / "energy_error.csv")
    axes[0, 1].semilogy(column(err, "t"), [v or 1e-20 for v in column(err, "energy_error")])
axes[0, 1].set(xlabel="t", ylabel="|E_k - E_0|", title="Energy error")

if (here / "traj_error.csv").exists():
    terr = read(here / "traj_error.csv")
    axes[1, 0].semilogy(column(terr, "t"), column(terr, "q1_error"))
    axes[1, 0].set(xlabel="t", ylabel="|q1 - q1_ref|", title="q1 trajectory error")
    axes[1, 1].semilogy(column(terr, "t"), column(terr, "q2_error"))
    axes[1, 1].set(xlabel="t", ylabel="|q2 - q2_ref|", title="q2 trajectory error")

fig.tight_layout()
out = here / "figure.png"
fig.savefig(out, dpi=150)
print(f"wrote {out}")
'''


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("--config", help="key=value config file")
    p_run.add_argument("--outdir", help="output directory (overrides config)")
    p_run.add_argument("overrides", nargs="*", metavar="key=value")

    p_suite = sub.add_parser("suite", help="run a registered experiment bundle")
    p_suite.add_argument("name", choices=SUITE_NAMES)
    p_suite.add_argument("--outdir", default=None)
    p_suite.add_argument("--workers", type=int, default=2)

    sub.add_parser("list", help="list problems, integrators and suites")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        if args.command == "list":
            print("problems:   ", " ".join(model_names()))
            print("integrators:", " ".join(INTEGRATOR_NAMES))
            print("suites:     ", " ".join(SUITE_NAMES))
            return 0
        if args.command == "run":
            cfg = parse_config(args.config, args.overrides)
            summary = run_experiment(cfg, Path(args.outdir) if args.outdir else None)
            status = "ok" if summary.get("success") else f"FAILED: {summary.get('error')}"
            print(f"{cfg.integrator} on {cfg.problem}: {status}")
            return 0 if summary.get("success") else 1
        if args.command == "suite":
            outdir = args.outdir or f"suite_{args.name}"
            summary = run_suite(args.name, outdir, workers=args.workers)
            print(f"suite {args.name}: {'ok' if summary['success'] else 'member failures'}")
            return 0 if summary["success"] else 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except VarintError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
