"""Generalized Monge-Ampere functionals and related integrals.

For a convex ``u`` vanishing on the boundary and ``u* = <x, grad u> - u``::

    H_{n+k}(u) = 1/(n+k+1) * int (u*)^k (-u) det D^2 u

together with its norm ``H^{1/(n+k+1)}``, the energy ``J = H - int int_u^0 F``,
the first and second variations, the scale-invariant integral
``int (-u) det D^2 u / (u*)^{n+1}``, the weighted variant ``H_h`` and the
Rayleigh quotient.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate

from .errors import ConfigError, QuadratureError, SingularIntegrandError
from .field import GridField, det_of, gradient, hessian, integrate, star_values
from .sources import Source

DET_FLOOR = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class FunctionalParams:
    """Exponents and scale of the problem family ``(u*)^k det D^2 u = lam (-u)^p``."""

    n: int
    k: float = 0.0
    p: float | None = None
    lam: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError("only n = 1 and n = 2 are supported")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")

    @property
    def degree(self) -> float:
        """Homogeneity degree n + k + 1 of H."""
        return self.n + self.k + 1

    def require_norm(self) -> None:
        if self.degree <= 0:
            raise ConfigError("n + k + 1 must be positive")

    def require_flow(self) -> None:
        if self.n + self.k < 0:
            raise ConfigError("n + k must be nonnegative")


class Calculus:
    """Derivative data of one field, computed once and shared by the integrals."""

    def __init__(self, u: GridField):
        self.u = u
        self.grad = gradient(u)
        self.hess = hessian(u)
        self.det = det_of(self.hess)
        self.star = star_values(u.points, self.grad, u.values)

    def star_power(self, k: float) -> np.ndarray:
        if k == 0:
            return np.ones_like(self.star)
        if k < 0 or not float(k).is_integer():
            if self.u.is_zero():
                raise SingularIntegrandError("u is identically zero and u* = 0 has no power k")
            bad = self.star <= 0
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise SingularIntegrandError(
                    f"u* <= 0 at {int(bad.sum())} nodes (first at {self.u.points[i]}); "
                    f"cannot raise to the power {k}")
        return self.star ** k


def _calc(u) -> Calculus:
    return u if isinstance(u, Calculus) else Calculus(u)


def _params(u: GridField, params) -> FunctionalParams:
    if isinstance(params, FunctionalParams):
        if params.n != u.dim:
            raise ConfigError(f"params.n = {params.n} but the field is {u.dim}-dimensional")
        return params
    return FunctionalParams(n=u.dim, k=float(params))


def eval_H(u: GridField, params) -> float:
    """H_{n+k}(u); ``params`` is a :class:`FunctionalParams` or just ``k``."""
    c = _calc(u)
    prm = _params(c.u, params)
    prm.require_norm()
    integrand = c.star_power(prm.k) * (-c.u.values) * c.det
    return integrate(integrand, grid=c.u.grid, vanishing=True) / prm.degree


def eval_Hnorm(u: GridField, params) -> float:
    """Positively one-homogeneous norm H^{1/(n+k+1)}."""
    c = _calc(u)
    prm = _params(c.u, params)
    H = eval_H(c, prm)
    if H < 0:
        raise SingularIntegrandError(f"H = {H:.3e} < 0; the field is not in the convex cone")
    return H ** (1.0 / prm.degree)


def eval_J(u: GridField, params, F: Source | None, convention: str = "normalized") -> float:
    """J(u) = H(u) - int_Omega int_u^0 F(x, s) ds dx."""
    c = _calc(u)
    prm = _params(c.u, params)
    H = eval_H(c, prm)
    if F is None:
        return H
    P = F.primitive(c.u.points, c.u.values, convention=convention)
    # the raw primitive need not vanish on the boundary, so it takes the full cut-cell weights
    return H - integrate(P, grid=c.u.grid, vanishing=convention == "normalized")


def first_variation(u: GridField, phi: GridField, params) -> float:
    """d/dt H(u + t phi) at t = 0, i.e. -int phi (u*)^k det D^2 u."""
    c = _calc(u)
    prm = _params(c.u, params)
    return -integrate(phi.values * c.star_power(prm.k) * c.det, grid=c.u.grid, vanishing=True)


def cofactor(hess: np.ndarray) -> np.ndarray:
    """Cofactor matrix det(A) A^{-1}, well defined also for singular A."""
    if hess.shape[-1] == 1:
        return np.ones_like(hess)
    cof = np.empty_like(hess)
    cof[:, 0, 0] = hess[:, 1, 1]
    cof[:, 1, 1] = hess[:, 0, 0]
    cof[:, 0, 1] = -hess[:, 0, 1]
    cof[:, 1, 0] = -hess[:, 1, 0]
    return cof


def second_variation(u: GridField, phi: GridField, psi: GridField, params) -> float:
    """Second variation of H at ``u`` in directions ``phi`` and ``psi``.

    ``int u^{ij} phi_i psi_j (u*)^k det + k int phi psi (u*)^{k-1} det``.  The
    inverse Hessian enters only through ``u^{ij} det = cof_ij``; nodes with
    ``det < 1e-12`` are dropped with a warning.
    """
    c = _calc(u)
    prm = _params(c.u, params)
    gp = gradient(phi)
    gq = gradient(psi)
    keep = c.det >= DET_FLOOR
    if not np.all(keep):
        warnings.warn(f"second_variation: {int((~keep).sum())} nodes with det D^2u < {DET_FLOOR} "
                      "were excluded", RuntimeWarning, stacklevel=2)
    cof = cofactor(c.hess)
    # symmetrize the bilinear form explicitly so swapping phi and psi is exact
    quad = 0.5 * (np.einsum("mi,mij,mj->m", gp, cof, gq) + np.einsum("mi,mij,mj->m", gq, cof, gp))
    total = integrate(np.where(keep, quad * c.star_power(prm.k), 0.0), grid=c.u.grid)
    if prm.k != 0:
        zeroth = prm.k * phi.values * psi.values * c.star_power(prm.k - 1) * c.det
        total += integrate(np.where(keep, zeroth, 0.0), grid=c.u.grid, vanishing=True)
    return total


def scale_invariant(u: GridField, n: int | None = None) -> float:
    """int (-u) det D^2 u / (u*)^{n+1}; depends only on the domain for smooth convex u."""
    c = _calc(u)
    n = c.u.dim if n is None else n
    return integrate(-c.u.values * c.det * c.star_power(-(n + 1)), grid=c.u.grid, vanishing=True)


class PrimitiveTable:
    """G(x) = int_0^x s^n h(s) ds on [0, xmax] via a cumulative 1-D table.

    Table nodes are filled by adaptive quadrature; values in between add a
    16-point Gauss-Legendre integral from the nearest node below.
    """

    def __init__(self, h_weight: Callable, n: int, xmax: float, nodes: int = 257):
        if not xmax > 0:
            raise ValueError("xmax must be positive")
        self.h = h_weight
        self.n = n
        self.t = np.linspace(0.0, xmax, nodes)
        vals = np.zeros(nodes)
        for j in range(1, nodes):
            piece, err = _integrate.quad(self._integrand, self.t[j - 1], self.t[j],
                                         epsabs=1e-14, epsrel=1e-12, limit=200)
            if not np.isfinite(piece) or err > 1e-9 * (1 + abs(piece)):
                raise QuadratureError(f"G table failed on [{self.t[j-1]:.3g}, {self.t[j]:.3g}]")
            vals[j] = vals[j - 1] + piece
        self.G = vals

    def _integrand(self, s):
        hs = np.asarray(self.h(s), dtype=float)
        if np.any(hs <= 0):
            raise ValueError("the weight h must be positive")
        return s ** self.n * hs

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, len(self.t) - 1)
        a = self.t[j]
        half = 0.5 * (x - a)
        s = a[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
        vals = self._integrand(s)
        return self.G[j] + half * (vals @ _GL_W)


def eval_Hh(u: GridField, h_weight: Callable, n: int | None = None) -> float:
    """Weighted functional int G(u*) (-u) det D^2 u / (u*)^{n+1}."""
    c = _calc(u)
    n = c.u.dim if n is None else n
    if c.u.is_zero():
        return 0.0
    sk = c.star_power(-(n + 1))
    table = PrimitiveTable(h_weight, n, float(c.star.max()))
    return integrate(table(c.star) * (-c.u.values) * c.det * sk, grid=c.u.grid, vanishing=True)


def lp_power(u: GridField, q: float) -> float:
    return integrate(np.abs(u.values) ** q, grid=u.grid, vanishing=True)


def rayleigh(u: GridField, params) -> float:
    """(n+k+1) H / int |u|^{n+k+1}; invariant under u -> c u."""
    c = _calc(u)
    prm = _params(c.u, params)
    prm.require_norm()
    den = lp_power(c.u, prm.degree)
    if den <= 0:
        raise ConfigError("rayleigh quotient of the zero field is undefined")
    return prm.degree * eval_H(c, prm) / den


@dataclass
class SobolevReport:
    H: float
    bound: float
    holds: bool


def sobolev_check(u: GridField, params, tol: float = 1e-8) -> SobolevReport:
    """Compare H with the lower bound |polar body| |u(0)|^{n+k+1} / (n+k+1)."""
    c = _calc(u)
    prm = _params(c.u, params)
    prm.require_norm()
    H = eval_H(c, prm)
    bound = c.u.domain.polar_volume() * abs(c.u.origin_value()) ** prm.degree / prm.degree
    return SobolevReport(H=H, bound=bound, holds=bool(H >= bound - tol))


@dataclass
class FunctionalReport:
    """All functional values of one field."""

    n: int
    k: float
    H: float
    Hnorm: float
    J: float | None
    scale_invariant: float
    polar_volume: float
    rayleigh: float
    sobolev_lower_bound: float
    sobolev_holds: bool

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def report(u: GridField, params, F: Source | None = None) -> FunctionalReport:
    c = Calculus(u)
    prm = _params(u, params)
    sob = sobolev_check(c, prm)
    try:
        si = scale_invariant(c)
    except SingularIntegrandError:
        si = float("nan")
    return FunctionalReport(
        n=prm.n, k=prm.k, H=sob.H, Hnorm=eval_Hnorm(c, prm),
        J=None if F is None else eval_J(c, prm, F),
        scale_invariant=si, polar_volume=u.domain.polar_volume(),
        rayleigh=rayleigh(c, prm), sobolev_lower_bound=sob.bound, sobolev_holds=sob.holds)
