import csv

import numpy as np
import pytest

from magma import ConfigError, ConvexDomain, FunctionalParams, GridField, Power, Shifted, eval_J
from magma.errors import TimeStepUnderflow
from magma.flow import FlowConfig, FlowState, barrier_bound, flow_run, flow_step
from magma.grid import get_grid
from magma.ma_core import SolveConfig, solve_semilinear
from magma.oracle1d import ShootingProblem, shoot
from magma.sources import Constant

P1 = FunctionalParams(1, 0)


def _interval_field(n, func):
    g = get_grid(ConvexDomain.interval(), n)
    return GridField(g, func(g.points[:, 0]))


def test_quadratic_is_exactly_stationary():
    u0 = _interval_field(65, lambda x: (x * x - 1) / 2)
    st = flow_step(FlowState(u=u0.copy()), Constant(1.0), P1, 1e-3)
    assert st.residual < 1e-12
    assert np.max(np.abs(st.u.values - u0.values)) < 1e-14


def test_disk_quadratic_stationary():
    g = get_grid(ConvexDomain.ball(1), 33)
    u0 = GridField(g, (np.sum(g.points ** 2, axis=1) - 1) / 2)
    st = flow_run(u0, Constant(1.0), FunctionalParams(2, 0), FlowConfig(tol=1e-8))
    assert st.reason == "converged" and st.accepted == 0


def test_newton_solution_is_fixed_point():
    F = Shifted(0.5, 0.1)
    res = solve_semilinear("interval:-1,1", P1, F, SolveConfig(grid=65, tol_residual=1e-12))
    st = flow_step(FlowState(u=res.u.copy()), F, P1, 1e-4)
    assert st.residual < 1e-10
    assert np.max(np.abs(st.u.values - res.u.values)) <= 1e-10 * 1e-4


def test_double_quadratic_relaxes_monotonically():
    u0 = _interval_field(33, lambda x: x * x - 1)
    st = flow_run(u0, Constant(1.0), P1, FlowConfig(tol=1e-10, tmax=1e3))
    assert st.reason == "converged"
    J = np.array([j for _, j in st.J_history])
    assert np.all(np.diff(J) <= 1e-8 * (1 + np.abs(J[:-1])))
    target = eval_J(_interval_field(33, lambda x: (x * x - 1) / 2), P1, Constant(1.0))
    assert J[-1] == pytest.approx(target, abs=1e-9)


def test_subcritical_flow_matches_oracle():
    ref = shoot(ShootingProblem(k=0, p=0.5))
    u0 = _interval_field(65, lambda x: (x * x - 1) / 2)
    st = flow_run(u0, Power(0.5), P1, FlowConfig(tol=1e-9, tmax=1e3))
    assert st.reason == "converged"
    assert np.max(np.abs(st.u.values - ref.u(u0.points[:, 0]))) < 1e-4


def test_supercritical_tiny_field_collapses_to_small_branch():
    F = Shifted(3.0, 0.01)
    u0 = _interval_field(33, lambda x: 1e-3 * (x * x - 1) / 2)
    st = flow_run(u0, F, P1, FlowConfig(tol=1e-10, tmax=1e3))
    assert st.reason == "converged"
    newton = solve_semilinear("interval:-1,1", P1, F, SolveConfig(grid=33, tol_residual=1e-12))
    assert np.max(np.abs(st.u.values - newton.u.values)) < 1e-9
    assert st.u.max_abs() < 1e-3 * 0.5


def test_supercritical_large_field_blows_up():
    u0 = _interval_field(33, lambda x: -5 * np.cos(np.pi * x / 2))
    st = flow_run(u0, Shifted(3.0, 0.01), P1, FlowConfig(tol=1e-10, tmax=1e3))
    assert st.reason == "blow-up"
    assert st.u.max_abs() > 1e3 * u0.max_abs()


def test_timeout_and_max_steps():
    u0 = _interval_field(33, lambda x: x * x - 1)
    assert flow_run(u0, Constant(1.0), P1, FlowConfig(tmax=1e-3)).reason == "timeout"
    assert flow_run(u0, Constant(1.0), P1, FlowConfig(max_steps=5)).reason == "max-steps"


def test_dissipation_identity():
    # (J_new - J_old)/dt + int u_t ((u*)^k det - F) is a first-order remainder in dt
    u0 = _interval_field(65, lambda x: x * x - 1)
    defects = []
    for dt in (2e-5, 1e-5, 5e-6):
        st = flow_step(FlowState(u=u0.copy()), Shifted(1.0, 0.1), P1, dt)
        assert st.dt_last == dt
        defects.append(abs(st.dissipation_defect[-1]))
    ratios = np.array(defects[:-1]) / np.array(defects[1:])
    assert np.all(np.abs(ratios - 2) < 0.1)


def test_barrier_bound_holds():
    g = get_grid(ConvexDomain.ball(1), 33)
    u0 = GridField(g, 2 * (np.sum(g.points ** 2, axis=1) - 1))
    F = Shifted(0.5, 0.2)
    eps, r = barrier_bound(u0, FunctionalParams(2, 0), F)
    assert eps > 0 and r == pytest.approx(1.0)
    st = flow_run(u0, F, FunctionalParams(2, 0), FlowConfig(tol=1e-6, tmax=100))
    assert st.diagnostics["barrier_violations"] == 0
    assert st.u.origin_value() <= -eps * r * r
    assert barrier_bound(u0, FunctionalParams(2, 0), Power(1.0)) is None


def test_write_history(tmp_path):
    u0 = _interval_field(33, lambda x: x * x - 1)
    st = flow_run(u0, Constant(1.0), P1, FlowConfig(max_steps=10))
    path = tmp_path / "J.csv"
    st.write_history(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "J", "residual", "umax"] and len(rows) == 12
    assert float(rows[-1][0]) == st.t


def test_errors():
    u0 = _interval_field(33, lambda x: x * x - 1)
    with pytest.raises(ConfigError):
        flow_run(-u0, Constant(1.0), P1)
    with pytest.raises(ConfigError):
        flow_run(u0, Constant(1.0), FunctionalParams(1, -1.5))
    with pytest.raises(ConfigError):
        FlowConfig(dt0=0)
    wiggly = u0.with_values(u0.values + 0.2 * np.sin(40 * u0.points[:, 0]))
    with pytest.raises(ConfigError):
        flow_step(FlowState(u=wiggly), Constant(1.0), P1, 1e-3)


def test_underflow_raised():
    # a J tolerance below zero rejects every step
    u0 = _interval_field(33, lambda x: x * x - 1)
    cfg = FlowConfig(j_tol=-1.0)
    with pytest.raises(TimeStepUnderflow):
        flow_step(FlowState(u=u0), Constant(1.0), P1, 1e-3, cfg)
