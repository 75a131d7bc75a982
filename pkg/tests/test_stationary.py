import math

import numpy as np
import pytest

from magma import ConfigError, ConvexDomain, FunctionalParams, make_test_field, rayleigh
from magma.errors import SolverError
from magma.grid import get_grid
from magma.ma_core import SolveConfig, degenerate_residual
from magma.oracle1d import ShootingProblem, shoot
from magma.stationary import (TRIAL_RECIPES, eigen_residual, mountain_pass_scale, rescale_solution,
                              solve_eigen, solve_subcritical, solve_supercritical,
                              trial_rayleigh_min)

M_SUB_HALF = 0.2009015219456534
M_SUB_K1 = 0.36357869994276937
LAM_K1 = 3.235476884693606
LAM_KM1 = 1.7080653   # k=-1, p=0 eigenvalue; shooting value checked in the test


def _max_err_1d(u, ref):
    return float(np.max(np.abs(u.values - ref.u(u.points[:, 0]))))


def test_rescale_examples(interval):
    u = make_test_field(interval, "quadratic(1)", n=33)
    prm = FunctionalParams(1, 0, 3)
    assert rescale_solution(u, prm, 1.0).values.tolist() == u.values.tolist()
    assert np.allclose(rescale_solution(u, prm, 16.0).values, u.values / 4, rtol=1e-15)
    with pytest.raises(ConfigError):
        rescale_solution(u, FunctionalParams(1, 0, 1), 2.0)
    with pytest.raises(ConfigError):
        rescale_solution(u, prm, -1.0)


@pytest.mark.parametrize("k,p,lam", [(0.0, 0.5, 3.0), (1.0, 1.0, 0.2), (0.0, 3.0, 16.0), (1.0, 3.5, 5.0)])
def test_rescale_residual_scaling_law(interval, k, p, lam):
    u = make_test_field(interval, "random-convex(3)", n=65)
    prm = FunctionalParams(1, k, p)
    v = rescale_solution(u, prm, lam)
    c = lam ** (1 / (1 + k - p))
    r0 = degenerate_residual(u, prm)
    r1 = degenerate_residual(v, FunctionalParams(1, k, p, lam))
    assert np.allclose(r1, c ** (1 + k) * r0, rtol=1e-12, atol=1e-14)


def test_subcritical_half():
    cfg = SolveConfig(grid=257)
    res = solve_subcritical("interval:-1,1", FunctionalParams(1, 0, 0.5), cfg)
    ref = shoot(ShootingProblem(k=0, p=0.5))
    assert abs(-res.u.origin_value() - M_SUB_HALF) < 1e-4
    assert _max_err_1d(res.u, ref) < 1e-4
    assert res.uniqueness_gap <= 10 * cfg.tol_residual and not res.notes


def test_subcritical_k1():
    res = solve_subcritical("interval:-1,1", FunctionalParams(1, 1, 1), SolveConfig(grid=257))
    assert abs(-res.u.origin_value() - M_SUB_K1) < 1e-4


def test_subcritical_lambda_scaling():
    cfg = SolveConfig(grid=129)
    a = solve_subcritical("interval:-1,1", FunctionalParams(1, 0, 0.5), cfg, check_uniqueness=False)
    b = solve_subcritical("interval:-1,1", FunctionalParams(1, 0, 0.5, 2 ** 0.5), cfg,
                          check_uniqueness=False)
    assert np.allclose(b.u.values, 2 * a.u.values, rtol=1e-13)


def test_subcritical_disk_uniqueness(disk):
    cfg = SolveConfig(grid=33)
    res = solve_subcritical(disk, FunctionalParams(2, 0, 1), cfg)
    assert res.uniqueness_gap <= 10 * cfg.tol_residual
    # the unshifted residual keeps the last ladder shift, |(eps-u) - (-u)| = eps
    assert res.residual <= 1e-6 + cfg.tol_residual


def test_subcritical_rejects_other_regimes():
    with pytest.raises(ConfigError):
        solve_subcritical("interval:-1,1", FunctionalParams(1, 0, 1))
    with pytest.raises(ConfigError):
        solve_supercritical("interval:-1,1", FunctionalParams(1, 0, 0.5))


def test_mountain_pass_scale_interval(interval):
    # a = 2 (1/2)^2 / 2 = 1/4 and A = 2/4 for p = 3: scale = (2 a / (4 A))^{1/2} = 1/2
    assert mountain_pass_scale(interval, FunctionalParams(1, 0, 3)) == pytest.approx(0.5, rel=1e-9)


def test_supercritical_interval():
    res = solve_supercritical("interval:-1,1", FunctionalParams(1, 0, 3), SolveConfig(grid=257))
    ref = shoot(ShootingProblem(k=0, p=3))
    assert _max_err_1d(res.u, ref) < 1e-4
    assert res.J > 0 and res.amplitude is not None


def test_supercritical_failure_reported(interval):
    shape = make_test_field(interval, "quadratic(1)", n=65)
    with pytest.raises(SolverError):
        solve_supercritical(interval, FunctionalParams(1, 0, 3), SolveConfig(grid=65, max_newton=2),
                            shape=shape)


def test_eigen_interval_k0():
    res = solve_eigen("interval:-1,1", FunctionalParams(1, 0), SolveConfig(grid=257))
    x = res.eigenfunction.points[:, 0]
    assert abs(res.lam - math.pi ** 2 / 4) < 1e-3
    assert np.max(np.abs(res.eigenfunction.values + np.cos(math.pi * x / 2))) < 1e-3
    assert abs(res.rayleigh_value - res.lam) < 1e-3
    assert res.residual <= 1e-9
    assert res.trace_monotone
    assert res.eigenfunction.max_abs() == pytest.approx(1.0)


def test_eigen_interval_k1():
    res = solve_eigen("interval:-1,1", FunctionalParams(1, 1), SolveConfig(grid=257))
    assert abs(res.lam - LAM_K1) < 1e-3
    assert abs(res.lam_continuation - LAM_K1) < 1e-2


def test_eigen_k_minus_n():
    ref = shoot(ShootingProblem(k=-1, p=0, eigen=True)).lam
    assert ref == pytest.approx(LAM_KM1, abs=1e-6)
    res = solve_eigen("interval:-1,1", FunctionalParams(1, -1), SolveConfig(grid=257))
    assert res.s_trace == [] and res.lam_continuation is None
    assert abs(res.lam - ref) < 1e-3


def test_eigen_uniqueness_from_two_starts(interval):
    cfg = SolveConfig(grid=129, tol_residual=1e-10)
    params = FunctionalParams(1, 0)
    g = get_grid(interval, 129)
    a = solve_eigen(interval, params, cfg)
    b = solve_eigen(interval, params, cfg, u0=make_test_field(interval, "random-convex(5)", grid=g))
    assert abs(a.lam - b.lam) < 1e-8
    assert np.max(np.abs(a.eigenfunction.values - b.eigenfunction.values)) < 1e-6


def test_eigen_bracket_and_infimum_disk(disk):
    cfg = SolveConfig(grid=65)
    params = FunctionalParams(2, 0)
    res = solve_eigen(disk, params, cfg)
    upper, _ = trial_rayleigh_min(disk, params, get_grid(disk, 65))
    assert abs(upper - res.lam_continuation) / res.lam < 0.05
    for recipe in TRIAL_RECIPES:
        assert rayleigh(make_test_field(disk, recipe, n=65), params) >= res.lam - 1e-3
    assert res.trace_monotone
    assert np.max(np.abs(eigen_residual(res.eigenfunction, params, res.lam))) <= 1e-9


def test_eigen_result_dict():
    res = solve_eigen("interval:-1,1", FunctionalParams(1, 0), SolveConfig(grid=65))
    d = res.to_dict()
    assert d["lambda"] == res.lam and len(d["s_trace"]) == len(res.s_trace) >= 6
