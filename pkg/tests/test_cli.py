import py_compile

import pytest

from varint import ConfigurationError
from varint.cli import (
    ExperimentConfig,
    main,
    parse_config,
    read_summary,
    run_experiment,
    run_suite,
)


def test_parse_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# one-period comparison\n"
        "problem = kepler\n"
        "e = 0.7\n"
        "integrator = epavi\n"
        "h0 = 0.001\n"
        "periods = 1\n"
    )
    cfg = parse_config(str(cfg_file), ["tol=1e-14", "digits=18"])
    assert cfg.e == 0.7
    assert cfg.tol == 1e-14
    assert cfg.digits == 18
    assert cfg.final_time() == pytest.approx(2 * 3.141592653589793)


def test_parse_config_rejects_unknown_key(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("integrater = epavi\n")
    with pytest.raises(ConfigurationError):
        parse_config(str(cfg_file))


def test_validation_rejects_unknown_integrator():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(integrator="rk4").validate()


def test_validation_rejects_low_digits():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(digits=8).validate()


def test_main_exit_codes(tmp_path, capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "epavi" in out and "kepler" in out
    # unknown integrator: configuration error -> exit 2
    assert main(["run", f"--outdir={tmp_path}", "integrator=rk99"]) == 2


def _quick_cfg(tmp_path, **kw):
    base = dict(
        problem="oscillator",
        integrator="epavi",
        h0=0.05,
        T_final=2.0,
        tol=1e-13,
        outdir=str(tmp_path),
        reference=True,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_outputs(tmp_path):
    summary = run_experiment(_quick_cfg(tmp_path))
    assert summary["success"]
    for name in ("config.txt", "trajectory.csv", "energy_error.csv",
                 "traj_error.csv", "stats.csv", "summary.txt", "plot.py"):
        assert (tmp_path / name).exists(), name
    stored = read_summary(tmp_path / "summary.txt")
    assert stored["success"] == "True"
    assert float(stored["max_energy_error"]) < 1e-10
    py_compile.compile(str(tmp_path / "plot.py"), doraise=True)


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_quick_cfg(a, outdir=str(a)))
    run_experiment(_quick_cfg(b, outdir=str(b)))
    for name in ("trajectory.csv", "energy_error.csv", "traj_error.csv", "stats.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_run_experiment_avi_on_kepler(tmp_path):
    cfg = ExperimentConfig(
        problem="kepler", e=0.7, integrator="avi2", h0=0.001,
        T_final=0.3, tol=1e-12, outdir=str(tmp_path), reference=False,
    )
    summary = run_experiment(cfg)
    assert summary["success"]
    assert summary["n_steps"] > 10


def test_run_experiment_reference_integrator(tmp_path):
    cfg = ExperimentConfig(
        problem="kepler", e=0.1, integrator="reference",
        T_final=1.0, outdir=str(tmp_path),
    )
    summary = run_experiment(cfg)
    assert summary["success"]
    assert summary["max_energy_error"] < 1e-10


def test_suite_unknown_name(tmp_path):
    with pytest.raises(ConfigurationError):
        run_suite("fig_e99", tmp_path)


def test_suite_bea_orders(tmp_path):
    summary = run_suite("bea_orders", tmp_path, workers=1)
    assert summary["success"]
    assert (tmp_path / "bea_orders.csv").exists()
    assert abs(summary["improvement_oscillator"] - 2.0) <= 0.6
    assert abs(summary["improvement_pendulum"] - 2.0) <= 0.6
    header = (tmp_path / "bea_orders.csv").read_text().splitlines()[0]
    assert header.startswith("problem,profile,modified,delta_a,residual_inf_norm")


def test_main_run_oscillator(tmp_path, capsys):
    code = main([
        "run", f"--outdir={tmp_path}",
        "problem=oscillator", "integrator=midpoint_fixed",
        "h0=0.05", "T_final=1.0", "tol=1e-12", "reference=false",
    ])
    assert code == 0
    assert (tmp_path / "summary.txt").exists()


def test_solver_keys_flow_through(tmp_path):
    cfg = parse_config(None, [
        "problem=oscillator", "integrator=epavi", "h0=0.05", "T_final=0.5",
        "tol=1e-11", "max_iter=30", "fd_step=1e-6", "condition_warn=1e10",
        f"outdir={tmp_path}", "reference=false",
    ])
    assert cfg.fd_step == 1e-6 and cfg.condition_warn == 1e10
    assert run_experiment(cfg)["success"]


def test_suite_h0_sensitivity_parallel(tmp_path):
    summary = run_suite("h0_sensitivity", tmp_path, workers=2)
    assert summary["success"]
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert len(lines) == 5  # header + 4 members
    header = lines[0].split(",")
    ratios = {}
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        ratios[row["label"]] = float(row["mean_step_ratio"])
    # the adaptation ratio is a property of the dynamics, not of h0
    assert abs(ratios["epavi_tol1e-15"] - ratios["epavi_tol1e-15_h0.01"]) <= 0.2 * ratios["epavi_tol1e-15"]


def test_run_extended_precision_summary(tmp_path):
    cfg = ExperimentConfig(
        problem="kepler", e=0.7, integrator="epavi", h0=0.01, periods=1.0,
        digits=18, tol=1e-17, outdir=str(tmp_path), reference=False,
    )
    summary = run_experiment(cfg)
    assert summary["success"]
    assert float(summary["max_energy_error"]) <= 1e-16


def test_failed_run_writes_failure_summary(tmp_path):
    # a tolerance below the double-precision floor cannot be met
    code = main([
        "run", f"--outdir={tmp_path}",
        "problem=kepler", "e=0.7", "integrator=epavi",
        "h0=0.001", "T_final=0.1", "tol=1e-30", "reference=false",
    ])
    assert code == 1
    stored = read_summary(tmp_path / "summary.txt")
    assert stored["success"] == "False"
    assert "error" in stored
