import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from magma import Callback, ConfigError, Constant, Continuation, Power, Shifted, parse_source

X = np.zeros((5, 1))
U = -np.linspace(0.1, 2.0, 5)


def _numeric_primitive(src, u):
    return np.array([integrate.quad(lambda s: float(src.value(X[:1], np.array([s]))[0]), ui, 0.0,
                                    epsabs=1e-13)[0] for ui in u])


@pytest.mark.parametrize("src", [Constant(2.0), Power(0.5), Power(3.0, lam=2.0), Shifted(1.5, 0.1),
                                 Continuation(0.7, 2.0)])
def test_primitive_matches_quadrature(src):
    assert np.allclose(src.primitive(X, U), _numeric_primitive(src, U), rtol=1e-10)


@pytest.mark.parametrize("src", [Power(0.5), Shifted(1.5, 0.1), Continuation(0.7, 2.0)])
def test_derivative_matches_difference(src):
    t = 1e-6
    fd = (src.value(X, U + t) - src.value(X, U - t)) / (2 * t)
    assert np.allclose(src.du(X, U), fd, rtol=1e-6)


def test_shifted_conventions():
    s = Shifted(2.0, 0.1)
    zero = np.zeros(3)
    assert np.allclose(s.primitive(X[:3], zero), 0.0)
    assert np.allclose(s.primitive(X[:3], zero, convention="raw"), 0.1 ** 3 / 3)
    with pytest.raises(ConfigError):
        s.primitive(X[:3], zero, convention="other")


def test_lower_bounds():
    assert Constant(3.0).lower_bound() == 3.0
    assert Power(1.0).lower_bound() == 0.0
    assert Shifted(2.0, 0.1, lam=2.0).lower_bound() == pytest.approx(0.02)
    assert Continuation(0.5, 1.0).lower_bound() == 1.0


def test_degenerate_flag():
    assert Power(0.5).degenerate and not Power(0.0).degenerate
    assert not Shifted(0.5, 0.1).degenerate
    assert Power(2.0).regularized(1e-3) == Shifted(2.0, 1e-3)


def test_callback_fallbacks():
    cb = Callback(lambda x, u: 1.0 + u * u)
    assert np.allclose(cb.du(X, U), 2 * U, rtol=1e-6)
    assert np.allclose(cb.primitive(X, U), -U - U ** 3 / 3, rtol=1e-9)


@pytest.mark.parametrize("text, cls", [("1", Constant), ("2.5", Constant), ("(-u)^p", Power),
                                       ("(-u)^0.5", Power), ("(eps-u)^p", Shifted),
                                       ("(0.1-u)^2", Shifted), ("(1-s*u)^q", Continuation),
                                       ("lambda*(-u)^p", Power)])
def test_parse_source(text, cls):
    assert isinstance(parse_source(text, p=1.5, eps=0.2, s=0.3, q=2.0), cls)


def test_parse_source_values():
    src = parse_source("(eps-u)^p", p=1.5, eps=0.2, lam=3.0)
    assert (src.p, src.eps, src.lam) == (1.5, 0.2, 3.0)
    assert parse_source("(1-s*u)^q", s=0.3, q=2.0) == Continuation(0.3, 2.0)


@pytest.mark.parametrize("bad", ["u^2", "(eps-u)^p", "(x-u)^2"])
def test_parse_source_errors(bad):
    with pytest.raises(ConfigError):
        parse_source(bad, eps=0.0)


@given(st.floats(0.0, 4.0), st.floats(1e-3, 1.0), st.floats(-3.0, 0.0))
@settings(max_examples=40, deadline=None)
def test_shifted_primitive_derivative(p, eps, u):
    s = Shifted(p, eps)
    uu = np.array([u])
    t = 1e-6
    dP = (s.primitive(X[:1], uu + t) - s.primitive(X[:1], uu - t)) / (2 * t)
    assert dP[0] == pytest.approx(-s.value(X[:1], uu)[0], rel=1e-5, abs=1e-8)
