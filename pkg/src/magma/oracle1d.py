"""Independent 1-D reference solutions by shooting and adaptive quadrature.

On the symmetric interval (-1, 1) the equation

    u'' = lam (x u' - u)^{-k} (eps - u)^p,     u(0) = -m,  u'(0) = 0,

is integrated with an adaptive Runge-Kutta method (DOP853) until ``u`` hits
zero.  The depth ``m`` (or ``lam`` for the eigenvalue problem, with ``m = 1``)
is tuned by Brent's method until the zero sits at ``x = 1``.  Nothing here
shares code with the grid solvers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _integrate
from scipy.optimize import brentq

from .errors import QuadratureError, ShootingError

X_HORIZON = 50.0


@dataclass(frozen=True)
class ShootingProblem:
    """Parameters of the symmetric boundary-value problem on (-1, 1)."""

    k: float = 0.0
    p: float = 1.0
    lam: float = 1.0
    eigen: bool = False
    bracket: tuple = (1e-6, 50.0)
    eps: float = 0.0
    rtol: float = 1e-12
    target_tol: float = 1e-10


@dataclass
class ShootingResult:
    """Depth ``m`` = -u(0), eigenvalue ``lam`` and a dense trajectory on [0, 1]."""

    problem: ShootingProblem
    m: float
    lam: float
    sol: object = field(repr=False)
    bracket: tuple = ()

    def u(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        return self.sol(np.minimum(x, 1.0))[0]

    def du(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sign(x) * self.sol(np.minimum(np.abs(x), 1.0))[1]

    def d2u(self, x) -> np.ndarray:
        u = self.u(x)
        st = np.asarray(x) * self.du(x) - u
        return (self.lam * st ** (-self.problem.k)
                * np.maximum(self.problem.eps - u, 0.0) ** self.problem.p)

    def samples(self, count: int = 201) -> tuple[np.ndarray, np.ndarray]:
        x = np.linspace(-1.0, 1.0, count)
        return x, self.u(x)


def _rhs(k, p, lam, eps=0.0):
    def f(x, y):
        u, du = y
        st = x * du - u
        return [du, lam * st ** (-k) * max(eps - u, 0.0) ** p]
    return f


def _hit_zero(x, y):
    return y[0]


_hit_zero.terminal = True
_hit_zero.direction = 1


def integrate_trajectory(k: float, p: float, lam: float, m: float, rtol: float = 1e-12,
                         horizon: float = X_HORIZON, eps: float = 0.0):
    """Integrate from x = 0 until u = 0; returns (zero location or None, solution)."""
    sol = _integrate.solve_ivp(_rhs(k, p, lam, eps), (0.0, horizon), [-m, 0.0], method="DOP853",
                               rtol=rtol, atol=rtol * 1e-2 * max(m, 1e-300), dense_output=True,
                               events=_hit_zero)
    if sol.status == -1:
        raise ShootingError(f"integration failed: {sol.message}")
    hits = sol.t_events[0]
    return (float(hits[0]) if len(hits) else None), sol


def shoot(problem: ShootingProblem) -> ShootingResult:
    """Solve the symmetric shooting problem for ``m`` (or for ``lam`` if eigen)."""
    k, p = problem.k, problem.p
    if problem.eigen and not math.isclose(p, 1 + k):
        raise ShootingError("the eigenvalue problem needs p = 1 + k")
    if problem.eigen and problem.eps != 0:
        raise ShootingError("the eigenvalue problem has no shift")

    def miss(par):
        lam, m = (par, 1.0) if problem.eigen else (problem.lam, par)
        x0, _ = integrate_trajectory(k, p, lam, m, problem.rtol, eps=problem.eps)
        return (x0 if x0 is not None else X_HORIZON) - 1.0

    lo, hi = problem.bracket
    flo, fhi = miss(lo), miss(hi)
    if flo * fhi > 0:
        raise ShootingError(f"no sign change of the miss distance on [{lo}, {hi}]")
    root = brentq(miss, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    lam, m = (root, 1.0) if problem.eigen else (problem.lam, root)
    x0, sol = integrate_trajectory(k, p, lam, m, problem.rtol, eps=problem.eps)
    if x0 is None or abs(x0 - 1.0) > 1e-9:
        raise ShootingError(f"final trajectory misses x = 1 (zero at {x0})")
    # re-integrate on [0, 1] exactly so the dense output ends at the boundary
    sol = _integrate.solve_ivp(_rhs(k, p, lam, problem.eps), (0.0, 1.0), [-m, 0.0], method="DOP853",
                               rtol=problem.rtol, atol=problem.rtol * 1e-2 * m, dense_output=True)
    uend = sol.y[0, -1]
    if abs(uend) > max(problem.target_tol, 1e-9 * m):
        raise ShootingError(f"|u(1)| = {abs(uend):.2e} exceeds the target")
    res = ShootingResult(problem, m=m, lam=lam, sol=sol.sol, bracket=(lo, hi))
    xs = np.linspace(0, 1, 401)[:-1]
    if np.any(res.d2u(xs) <= 0):
        raise ShootingError("trajectory lost convexity")
    return res


def quad(integrand, a: float = -1.0, b: float = 1.0, tol: float = 1e-12) -> float:
    """Adaptive quadrature of a closed-form integrand.

    ``integrand`` is a callable of one variable or an expression in ``x`` using
    numpy names, e.g. ``"2*(1-x**2)/(1+x**2)**2"``.
    """
    if isinstance(integrand, str):
        code = compile(integrand, "<integrand>", "eval")
        names = {n: getattr(np, n) for n in dir(np) if not n.startswith("_")}
        names["__builtins__"] = {}

        def func(x):
            return eval(code, names, {"x": x})
    else:
        func = integrand
    with warnings.catch_warnings():
        warnings.simplefilter("error", _integrate.IntegrationWarning)
        try:
            val, err = _integrate.quad(func, a, b, epsabs=tol, epsrel=tol, limit=500)
        except _integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge: {str(exc).splitlines()[0]}") from exc
    if not np.isfinite(val) or err > 10 * tol * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature did not reach {tol:.0e} (error estimate {err:.1e})")
    return float(val)


def oracle_H(res: ShootingResult) -> float:
    """H_{1+k} of the shooting solution, by quadrature on the dense trajectory."""
    k = res.problem.k

    def f(x):
        u = res.u(x)
        st = x * res.du(x) - u
        return st ** k * (-u) * res.d2u(x)

    return 2.0 * quad(f, 0.0, 1.0) / (k + 2)


def oracle_rayleigh(res: ShootingResult) -> float:
    """(k+2) H / int |u|^{k+2} for the shooting solution."""
    k = res.problem.k
    den = 2.0 * quad(lambda x: np.abs(res.u(x)) ** (k + 2), 0.0, 1.0)
    return (k + 2) * oracle_H(res) / den


def scaling_depth(k: float, p: float, lam: float = 1.0, rtol: float = 1e-12) -> tuple[float, float]:
    """Depth m (and eigenvalue) from one unit-depth trajectory and the scaling symmetry.

    If v solves the equation with lam = 1 and v(0) = -1 with zero at x0, then
    c v(x0 x) solves it with zero at 1 when ``c^{1+k-p} = lam / x0^2``; for
    ``p = 1 + k`` the eigenvalue is ``x0^2``.  Used as a cross-check of
    :func:`shoot`.
    """
    x0, _ = integrate_trajectory(k, p, 1.0, 1.0, rtol)
    if x0 is None:
        raise ShootingError("unit trajectory never reaches zero")
    if math.isclose(p, 1 + k):
        return 1.0, x0 * x0
    return (lam / x0 ** 2) ** (1.0 / (1 + k - p)), lam
