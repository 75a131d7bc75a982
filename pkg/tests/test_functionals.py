import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magma import (ConfigError, ConvexDomain, FunctionalParams, GridField, Power, Shifted,
                   SingularIntegrandError, eval_H, eval_Hh, eval_Hnorm, eval_J, first_variation,
                   make_test_field, rayleigh, report, scale_invariant, second_variation, sobolev_check)
from magma.grid import get_grid

RECIPES = ["quadratic(1)", "cosine-bump(1)", "exp-bump(1)", "exp-bump(2)", "random-convex(4)",
           "random-convex(9)"]


def _order(errs):
    return math.log2(errs[0] / errs[1])


def test_H_interval_quadratic(interval):
    errs = [abs(eval_H(make_test_field(interval, "quadratic(1)", n=n), 0) - 1 / 3) for n in (129, 257)]
    assert errs[1] < 1e-5 and _order(errs) > 1.8


def test_H_disk_quadratic(disk):
    errs = [abs(eval_H(make_test_field(disk, "quadratic(1)", n=n), 0) - math.pi / 12) for n in (65, 129)]
    assert errs[1] < 1e-4 and _order(errs) > 1.8


def test_H_zero_field(disk):
    z = GridField.zeros(get_grid(disk, 33))
    assert eval_H(z, 0) == 0.0 and eval_H(z, 1) == 0.0


def test_negative_k_on_zero_field(disk):
    z = GridField.zeros(get_grid(disk, 33))
    with pytest.raises(SingularIntegrandError):
        eval_H(z, -0.5)


def test_params_validation(disk):
    with pytest.raises(ConfigError):
        FunctionalParams(3)
    with pytest.raises(ConfigError):
        FunctionalParams(1, lam=0)
    with pytest.raises(ConfigError):
        eval_H(make_test_field(disk, n=17), FunctionalParams(1))
    with pytest.raises(ConfigError):
        eval_Hnorm(make_test_field(disk, n=17), -3)


def test_Hnorm_examples(interval):
    u = make_test_field(interval, "quadratic(1)", n=257)
    assert eval_Hnorm(u, 0) == pytest.approx(math.sqrt(1 / 3), abs=1e-5)
    assert eval_Hnorm(u + u, 0) == pytest.approx(2 * eval_Hnorm(u, 0), rel=1e-13)


@pytest.mark.parametrize("k", [0.0, 1.0, -0.5, 2.0])
@pytest.mark.parametrize("recipe", RECIPES[:4])
def test_H_homogeneity(disk, k, recipe):
    u = make_test_field(disk, recipe, n=33)
    for c in (0.3, 2.0, 7.5):
        assert eval_H(u * c, k) == pytest.approx(c ** (3 + k) * eval_H(u, k), rel=1e-10)
        assert eval_Hnorm(u * c, k) == pytest.approx(c * eval_Hnorm(u, k), rel=1e-10)


@pytest.mark.parametrize("recipe", RECIPES)
def test_H_positive(disk, interval, recipe):
    for dom in (disk, interval):
        u = make_test_field(dom, recipe, n=65)
        for k in (0.0, 1.0, -dom.dim + 0.5):
            assert eval_H(u, k) > 0


def test_J_examples(interval):
    u = make_test_field(interval, "quadratic(1)", n=257)
    assert eval_J(u, 0, None) == eval_H(u, 0)
    assert eval_J(u, FunctionalParams(1, 0, 1), Power(1.0)) == pytest.approx(1 / 3 - 2 / 15, abs=1e-5)


def test_J_zero_field_conventions(disk):
    z = GridField.zeros(get_grid(disk, 129))
    F = Shifted(2.0, 0.1)
    assert eval_J(z, 0, F) == 0.0
    raw = eval_J(z, 0, F, convention="raw")
    assert raw == pytest.approx(-math.pi * 0.1 ** 3 / 3, rel=1e-3)


def test_first_variation_examples(interval):
    errs = []
    for n in (129, 257):
        u = make_test_field(interval, "quadratic(1)", n=n)
        errs.append(abs(first_variation(u, u, 0) - 2 / 3))
    assert errs[1] < 5e-5 and _order(errs) > 1.8
    assert first_variation(u, GridField.zeros(u.grid), 0) == 0.0


def test_second_variation_examples(interval):
    u = make_test_field(interval, "quadratic(1)", n=257)
    assert second_variation(u, u, u, 0) == pytest.approx(2 / 3, abs=1e-4)


def _smooth_direction(dom, grid, coeffs):
    x = grid.points
    rho = dom.defining_function(x if dom.dim == 2 else x[:, 0])
    lin = coeffs[0] + x @ np.asarray(coeffs[1:1 + dom.dim])
    return GridField(grid, 0.5 * rho * lin)


@pytest.mark.parametrize("k", [0.0, 1.0, 2.0])
def test_second_variation_symmetric_and_nonnegative(disk, k, rng):
    g = get_grid(disk, 65)
    u = make_test_field(disk, "random-convex(2)", grid=g)
    for _ in range(5):
        phi = _smooth_direction(disk, g, rng.uniform(-1, 1, 3))
        psi = _smooth_direction(disk, g, rng.uniform(-1, 1, 3))
        assert second_variation(u, phi, psi, k) == second_variation(u, psi, phi, k)
        assert second_variation(u, phi, phi, k) >= 0


@pytest.mark.parametrize("k", [0.0, 1.0])
def test_variations_match_differences(interval, k, rng):
    g = get_grid(interval, 257)
    t = 1e-3
    for seed in range(5):
        u = make_test_field(interval, f"random-convex({seed})", grid=g)
        phi = _smooth_direction(interval, g, rng.uniform(0.5, 1.5, 2) * [1, 0.3])
        Hp, H0, Hm = eval_H(u + phi * t, k), eval_H(u, k), eval_H(u - phi * t, k)
        assert first_variation(u, phi, k) == pytest.approx((Hp - Hm) / (2 * t), rel=1e-4)
        assert second_variation(u, phi, phi, k) == pytest.approx((Hp - 2 * H0 + Hm) / t ** 2, rel=1e-3)


def test_second_variation_degenerate_warning(interval):
    g = get_grid(interval, 33)
    u = make_test_field(interval, "quadratic(1)", grid=g)
    flat = GridField(g, np.where(np.abs(g.points[:, 0]) < 0.3, -0.455, u.values))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        second_variation(flat, u, u, 0)
    assert any("excluded" in str(w.message) for w in rec)


def test_scale_invariant_examples(interval, disk):
    assert scale_invariant(make_test_field(interval, "quadratic(1)", n=513)) == pytest.approx(2, rel=1e-4)
    assert scale_invariant(make_test_field(interval, "exp-bump(1)", n=513)) == pytest.approx(2, rel=1e-4)
    assert scale_invariant(make_test_field(disk, "quadratic(1)", n=129)) == pytest.approx(math.pi, rel=1e-3)


def test_scale_invariant_constancy_disk(disk):
    g = get_grid(disk, 257)                     # h = 1/128
    vals = np.array([scale_invariant(make_test_field(disk, r, grid=g)) for r in RECIPES])
    assert np.ptp(vals) / math.pi < 0.01
    assert np.all(np.abs(vals - math.pi) / math.pi < 0.01)


def test_scale_invariant_ellipse(ellipse):
    g = get_grid(ellipse, 257)
    vals = [scale_invariant(make_test_field(ellipse, r, grid=g)) for r in RECIPES[:3]]
    assert np.allclose(vals, ellipse.polar_volume(), rtol=0.01)


def test_Hh_reductions(disk):
    u = make_test_field(disk, "random-convex(6)", n=65)
    assert eval_Hh(u, lambda s: np.ones_like(s)) == pytest.approx(eval_H(u, 0), rel=1e-9)
    for k in (1.0, 2.0, 0.5):
        assert eval_Hh(u, lambda s, k=k: s ** k) == pytest.approx(eval_H(u, k), rel=1e-9)
    assert eval_Hh(GridField.zeros(u.grid), lambda s: np.ones_like(s)) == 0.0


def test_Hh_small_field_limit(disk):
    u = make_test_field(disk, "quadratic(1)", n=33)
    vals = [eval_Hh(u * c, lambda s: 1.0 / (1.0 + s)) for c in (1e-1, 1e-2, 1e-3)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_rayleigh_cosine(interval):
    g = get_grid(interval, 513)
    u = GridField(g, -np.cos(np.pi * g.points[:, 0] / 2))
    assert rayleigh(u, 0) == pytest.approx(math.pi ** 2 / 4, abs=1e-4)
    assert rayleigh(u * 3.7, 0) == pytest.approx(rayleigh(u, 0), rel=1e-12)


@pytest.mark.parametrize("recipe", RECIPES)
def test_sobolev_every_recipe(disk, interval, recipe):
    for dom in (disk, interval):
        u = make_test_field(dom, recipe, n=65)
        for k in (0.0, 1.0, -dom.dim + 0.5):
            assert sobolev_check(u, FunctionalParams(dom.dim, k)).holds


def test_report_json(disk):
    rep = report(make_test_field(disk, "quadratic(1)", n=65), 0, Power(1.0))
    data = json.loads(rep.to_json())
    assert data["sobolev_holds"] and data["polar_volume"] == pytest.approx(math.pi)
    assert data["H"] == pytest.approx(math.pi / 12, rel=1e-3)


@given(st.integers(0, 5000), st.integers(0, 5000), st.sampled_from([0.0, 1.0, 2.0]))
@settings(max_examples=20, deadline=None)
def test_triangle_inequality_property(s1, s2, k):
    dom = ConvexDomain.ball(1)
    g = get_grid(dom, 33)
    u = make_test_field(dom, f"random-convex({s1})", grid=g)
    v = make_test_field(dom, f"random-convex({s2})", grid=g)
    assert eval_Hnorm(u + v, k) <= eval_Hnorm(u, k) + eval_Hnorm(v, k) + 1e-8
