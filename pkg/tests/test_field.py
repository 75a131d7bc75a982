import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magma import ConfigError, ConvexDomain, GridField, integrate, load_csv, make_test_field, save_csv, star
from magma.field import gradient, hessian_det, is_convex
from magma.grid import get_grid

RECIPES = ["quadratic(1)", "cosine-bump(1)", "exp-bump(1)", "random-convex(3)", "random-convex(11)"]


def _node(f, point):
    i = int(np.argmin(np.linalg.norm(f.points - np.asarray(point), axis=1)))
    assert np.linalg.norm(f.points[i] - point) < 1e-12
    return i


def test_gradient_examples(disk, interval):
    u = make_test_field(disk, "quadratic(1)", n=65)
    i = _node(u, [0.5, 0.0])
    assert np.allclose(gradient(u)[i], [0.5, 0.0], atol=1e-12)
    assert np.all(gradient(GridField.zeros(u.grid)) == 0)
    v = make_test_field(interval, "quadratic(1)", n=129)
    assert gradient(v)[_node(v, [0.25])][0] == pytest.approx(0.25, abs=1e-12)


def test_hessian_det_examples(disk, ellipse, interval):
    assert np.allclose(hessian_det(make_test_field(disk, "quadratic(1)", n=65)), 1.0, atol=1e-10)
    # (x^2 + 4 y^2 - 1)/2 on the ellipse with semi-axes 1, 1/2
    assert np.allclose(hessian_det(make_test_field(ellipse, "quadratic(1)", n=65)), 4.0, atol=1e-9)
    errs = []
    for n in (129, 257):
        g = get_grid(interval, n)
        x = g.points[:, 0]
        u = GridField(g, -np.cos(np.pi * x / 2))
        errs.append(np.max(np.abs(hessian_det(u) - np.pi ** 2 / 4 * np.cos(np.pi * x / 2))))
    assert errs[0] < 1e-3 and errs[0] / errs[1] > 3.5


def test_hessian_det_order_interior(disk):
    """Second order away from the cut stencils next to the boundary."""
    errs = []
    for n in (65, 129, 257):
        g = get_grid(disk, n)
        r2 = np.sum(g.points ** 2, axis=1)
        u = make_test_field(disk, "exp-bump(0.5)", grid=g)
        # u = (exp(c rho) - 1)/c with rho = r^2 - 1: D^2u = e^{c rho}(2 I + 4 c x x^T)
        c = 0.5
        exact = np.exp(2 * c * (r2 - 1)) * (4 + 8 * c * r2)
        keep = np.ones(g.m, dtype=bool)
        for nb in g.neighbor.values():
            keep &= nb >= 0
        keep &= g.cross_order == 2
        errs.append(np.max(np.abs(hessian_det(u) - exact)[keep]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8), orders


def test_star_examples(disk):
    u = make_test_field(disk, "quadratic(1)", n=65)
    s = star(u)
    assert np.allclose(s.values, (np.sum(u.points ** 2, axis=1) + 1) / 2, atol=1e-12)
    assert s.min() == pytest.approx(0.5, abs=u.h[0])
    assert np.all(star(GridField.zeros(u.grid)).values == 0)


@pytest.mark.parametrize("recipe", RECIPES)
def test_star_minimum_near_origin(disk, recipe):
    u = make_test_field(disk, recipe, n=65)
    s = star(u)
    gnorm = np.max(np.linalg.norm(gradient(u), axis=1))
    assert s.min() > 0
    assert abs(s.min() + u.origin_value()) <= 2 * u.h[0] * gnorm


@pytest.mark.parametrize("recipe", RECIPES)
def test_gradient_image_in_polar_body(disk, recipe):
    u = make_test_field(disk, recipe, n=65)
    g = gradient(u) / star(u).values[:, None]
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ys = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    assert np.max(g @ ys.T) <= 1 + 5 * u.h[0]


def test_integrate_examples(disk, interval):
    g = get_grid(disk, 257)                      # h = 1/128
    assert integrate(np.ones(g.m), grid=g) == pytest.approx(math.pi, abs=1e-3)
    sq = get_grid(ConvexDomain.rectangle(1, 1), 65)
    assert integrate(np.ones(sq.m), grid=sq) == pytest.approx(4.0, rel=1e-13)
    errs = []
    for n in (129, 257):
        gi = get_grid(interval, n)
        errs.append(abs(integrate(1 - gi.points[:, 0] ** 2, grid=gi) - 4 / 3))
    assert errs[0] < 1e-4 and errs[0] / errs[1] > 3.5


def test_integrate_with_weight(interval):
    g = get_grid(interval, 129)
    x = g.points[:, 0]
    assert integrate(1 - x, weight=1 + x, grid=g) == pytest.approx(4 / 3, abs=1e-4)


def test_make_test_field_examples(disk, interval):
    u = make_test_field(disk, "quadratic(1)", n=33)
    assert np.allclose(u.values, (np.sum(u.points ** 2, axis=1) - 1) / 2)
    v = make_test_field(interval, "exp-bump(1)", n=65)
    assert np.allclose(v.values, np.exp(v.points[:, 0] ** 2 - 1) - 1)
    assert is_convex(make_test_field(disk, "random-convex(7)", n=65))


def test_recipe_errors(disk):
    with pytest.raises(ConfigError):
        make_test_field(disk, "saddle(1)")
    with pytest.raises(ConfigError):
        make_test_field(ConvexDomain.rectangle(1, 1), "quadratic(1)")
    with pytest.raises(ConfigError):
        make_test_field(disk, "quadratic(-1)")


@pytest.mark.parametrize("recipe", RECIPES)
def test_discrete_cone_membership(ellipse, recipe):
    u = make_test_field(ellipse, recipe, n=65)
    assert np.all(u.values < 0)
    assert is_convex(u)


def test_csv_round_trip_exact(disk, interval):
    for dom in (disk, interval):
        u = make_test_field(dom, "random-convex(5)", n=33)
        buf = io.StringIO()
        save_csv(u, buf)
        buf.seek(0)
        v = load_csv(buf)
        assert v.grid.domain == dom and np.array_equal(v.values, u.values)


def test_csv_file_round_trip(tmp_path, ellipse):
    u = make_test_field(ellipse, "exp-bump(2)", n=33)
    path = tmp_path / "f.csv"
    save_csv(u, path)
    assert np.array_equal(load_csv(path).values, u.values)


def test_field_arithmetic(disk):
    u = make_test_field(disk, "quadratic(1)", n=17)
    assert np.allclose((u + u).values, (2 * u).values)
    assert np.allclose((u - u).values, 0)
    assert (u * 3).max_abs() == pytest.approx(3 * u.max_abs())
    assert (-u).origin_value() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        GridField(u.grid, np.zeros(3))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_random_convex_is_convex(seed):
    dom = ConvexDomain.ball(1) if seed % 2 else ConvexDomain.interval()
    u = make_test_field(dom, f"random-convex({seed})", n=33)
    assert is_convex(u) and np.all(u.values < 0)
