"""Shared fixtures: the long Kepler runs are computed once per session."""

import math

import pytest

from varint import (
    KeplerTwoBody,
    SolverConfig,
    avi_run,
    epavi_run,
    kepler_initial_state,
    make_monitor,
    reference_solve,
    with_precision,
)

PERIOD = 2 * math.pi


def _kepler_run(integrator, e, h0=1e-3, tol=None, digits=16, T=PERIOD):
    ctx = with_precision(digits)
    model = KeplerTwoBody(ctx)
    state0 = kepler_initial_state(e, ctx)
    cfg = SolverConfig.for_context(ctx, **({"tol": tol} if tol else {}))
    if integrator == "epavi":
        return epavi_run(model, state0, ctx.real(h0), T, cfg)
    monitor = make_monitor(integrator, model, state0)
    return avi_run(model, monitor, state0, T, cfg, h0=ctx.real(h0))


@pytest.fixture(scope="session")
def epavi_e07(request):
    return _kepler_run("epavi", 0.7, tol=1e-15)


@pytest.fixture(scope="session")
def epavi_e01(request):
    return _kepler_run("epavi", 0.1, tol=1e-15)


@pytest.fixture(scope="session")
def avi1_e07(request):
    return _kepler_run("g1", 0.7, tol=1e-13)


@pytest.fixture(scope="session")
def avi2_e07(request):
    return _kepler_run("g2", 0.7, tol=1e-13)


@pytest.fixture(scope="session")
def avi1_e01(request):
    return _kepler_run("g1", 0.1, tol=1e-13)


@pytest.fixture(scope="session")
def avi2_e01(request):
    return _kepler_run("g2", 0.1, tol=1e-13)


@pytest.fixture(scope="session")
def epavi_e07_h01(request):
    return _kepler_run("epavi", 0.7, h0=1e-2, tol=1e-15)


@pytest.fixture(scope="session")
def avi2_e07_h01(request):
    return _kepler_run("g2", 0.7, h0=1e-2, tol=1e-13)


@pytest.fixture(scope="session")
def epavi_e07_tol12(request):
    return _kepler_run("epavi", 0.7, tol=1e-12)


@pytest.fixture(scope="session")
def avi1_e07_tol12(request):
    return _kepler_run("g1", 0.7, tol=1e-12)


@pytest.fixture(scope="session")
def avi2_e07_tol12(request):
    return _kepler_run("g2", 0.7, tol=1e-12)


@pytest.fixture(scope="session")
def vpa_double_tol15(epavi_e07_h01):
    # double-precision leg of the variable-precision study (h0 = 0.01 run)
    return epavi_e07_h01


@pytest.fixture(scope="session")
def vpa_extended_tol17(request):
    return _kepler_run("epavi", 0.7, h0=1e-2, tol=1e-17, digits=18)


@pytest.fixture(scope="session")
def reference_e01(request):
    return reference_solve(KeplerTwoBody(), kepler_initial_state(0.1), PERIOD)


@pytest.fixture(scope="session")
def reference_e07(request):
    return reference_solve(KeplerTwoBody(), kepler_initial_state(0.7), PERIOD)
