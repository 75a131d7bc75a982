"""Radial graph transform u -> phi and checks of the dual formulation.

For a convex ``u < 0`` vanishing on the boundary, the radial graph of
``1/(-u)`` is the graph of a convex function on R^n::

    y = x / (-u(x)),   phi(y) = 1 / (-u(x)),   grad phi(y) = grad u(x) / u*(x),

and ``grad phi`` maps R^n onto the polar body of the domain.  The Hessian of
``phi`` has the closed form

    phi_ij = (-u/u*) (u_jk - u_j x_m u_mk / u*) (delta_ki - x_k u_i / u*),

which gives ``det D^2 u / (u*)^{n+2} = phi^{n+2} det D^2 phi``.  Written in
``phi`` the Dirichlet problem becomes a second boundary value problem whose
solutions push ``lam dy / phi^{n+2+p}`` forward to ``dz / (-phi*)^{n+2+k}``.

Evaluated from one set of nodal derivatives the closed form satisfies the
duality (and ``<y, grad phi> - phi = -1/u*``) exactly in algebra, so the
reports also carry independent discrete pathways: ``grad phi`` differenced on
the grid with the chain rule, and a discrete Legendre transform over the
sample cloud.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, SingularIntegrandError
from .field import GridField, det_of, gradient, hessian, star_values
from .functionals import FunctionalParams

CUT_FACTOR = 10.0


@dataclass
class RadialGraphSample:
    """Samples of the radial graph transform at the retained grid nodes."""

    index: np.ndarray      # interior-node indices of the retained samples
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    grad_phi: np.ndarray
    hess_phi: np.ndarray
    u: np.ndarray
    grad_u: np.ndarray
    hess_u: np.ndarray
    star: np.ndarray
    delta_cut: float
    field: GridField = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.phi)

    def legendre_gap(self) -> np.ndarray:
        """<y, grad phi> - phi + 1/u* at each sample."""
        return np.einsum("mi,mi->m", self.y, self.grad_phi) - self.phi + 1.0 / self.star

    def in_polar(self, slack: float = 0.0) -> np.ndarray:
        """Whether each ``grad phi`` lies in the polar body, i.e. h_Omega(g) <= 1 + slack."""
        return domain_support(self.field.domain, self.grad_phi) <= 1.0 + slack

    def to_rows(self, residual: np.ndarray | None = None) -> list[list[float]]:
        res = np.full(len(self), np.nan) if residual is None else residual
        return [list(map(float, np.concatenate([self.x[i], self.y[i], [self.phi[i]],
                                                self.grad_phi[i], [res[i]]])))
                for i in range(len(self))]

    def header(self) -> list[str]:
        if self.n == 1:
            return ["x", "y", "phi", "dphi", "residual"]
        return ["x1", "x2", "y1", "y2", "phi", "dphi1", "dphi2", "residual"]


def domain_support(domain, g: np.ndarray) -> np.ndarray:
    """h_Omega(g) = sup_{x in Omega} <x, g> for each row of ``g``."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if domain.dim == 1:
        a, b = domain.params
        return np.where(g[:, 0] >= 0, b * g[:, 0], a * g[:, 0])
    r = np.hypot(g[:, 0], g[:, 1])
    return r * domain.support(np.arctan2(g[:, 1], g[:, 0]))


def closed_form_hessian(x, u, grad, hess, star) -> np.ndarray:
    """D^2 phi at y = x/(-u) from the derivatives of u (symmetrized)."""
    n = x.shape[1]
    hx = np.einsum("mij,mj->mi", hess, x)                        # (D^2u x)_k
    M = hess - np.einsum("mj,mk->mjk", grad, hx) / star[:, None, None]
    P = np.eye(n)[None] - np.einsum("mk,mi->mki", x, grad) / star[:, None, None]
    out = (-u / star)[:, None, None] * np.einsum("mjk,mki->mij", M, P)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def radial_transform(u: GridField, cut_factor: float = CUT_FACTOR,
                     delta_cut: float | None = None) -> RadialGraphSample:
    """Radial graph samples at nodes with ``-u >= delta_cut``.

    The default cutoff is ``cut_factor * h * max|grad u|``; convergence
    studies pass a fixed ``delta_cut`` so that every level samples the same
    region.
    """
    if u.is_zero():
        raise SingularIntegrandError("the radial graph of the zero field is empty")
    if not u.origin_value() < 0:
        raise ConfigError("u must be negative inside the domain")
    grad = gradient(u)
    hess = hessian(u)
    st = star_values(u.points, grad, u.values)
    delta = cut_factor * max(u.h) * float(np.max(np.linalg.norm(grad, axis=1)))
    if delta_cut is not None:
        if delta_cut < delta:
            raise ConfigError(f"delta_cut = {delta_cut:.3g} is below the grid cutoff {delta:.3g}")
        delta = float(delta_cut)
    keep = np.flatnonzero((-u.values >= delta) & (st > 0))
    if len(keep) == 0:
        raise ConfigError(f"no samples survive the cutoff -u >= {delta:.3g}")
    x = u.points[keep]
    uv = u.values[keep]
    g, H, s = grad[keep], hess[keep], st[keep]
    return RadialGraphSample(
        index=keep, x=x, y=x / (-uv)[:, None], phi=1.0 / (-uv), grad_phi=g / s[:, None],
        hess_phi=closed_form_hessian(x, uv, g, H, s), u=uv, grad_u=g, hess_u=H, star=s,
        delta_cut=delta, field=u)


def grid_hessian_phi(sample: RadialGraphSample) -> np.ndarray:
    """D^2 phi = (d grad phi / dx)(dy/dx)^{-1}, with d grad phi / dx differenced on the grid.

    ``grad phi`` is extended to all interior nodes and differenced with the
    grid operators; ``dy/dx = I/(-u) + x (grad u)^T / u^2`` is exact.  The cutoff
    keeps every retained node at least a few cells from the boundary, so only
    central stencils of interior nodes are used.
    """
    u = sample.field
    grid = u.grid
    grad = gradient(u)
    st = star_values(u.points, grad, u.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        gphi = grad / st[:, None]
    gphi = np.where(np.isfinite(gphi), gphi, 0.0)
    n = grid.dim
    dg = np.empty((grid.m, n, n))
    for a in range(n):
        for b in range(n):
            dg[:, a, b] = grid.D1[b] @ gphi[:, a]
    dg = dg[sample.index]
    x, uv = sample.x, sample.u
    Jy = np.eye(n)[None] / (-uv)[:, None, None] + np.einsum("mi,mj->mij", x, sample.grad_u) / (uv ** 2)[:, None, None]
    return dg @ np.linalg.inv(Jy)


@dataclass
class DualityReport:
    """Relative residuals of det D^2u/(u*)^{n+2} = phi^{n+2} det D^2 phi."""

    samples: int
    delta_cut: float
    max_rel: float
    mean_rel: float
    grid_max_rel: float
    grid_mean_rel: float
    legendre_max: float
    legendre_budget: float
    legendre_ok: bool
    polar_violation: float
    h: float

    def to_dict(self) -> dict:
        return asdict(self)


def discrete_legendre(sample: RadialGraphSample, count: int | None = 2000,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """phi*(grad phi_i) = max_j <y_j, grad phi_i> - phi_j over the sample cloud.

    Returns (indices, values) for ``count`` randomly chosen samples (all if
    ``count`` is None).
    """
    m = len(sample)
    if count is None or count >= m:
        idx = np.arange(m)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(m, size=count, replace=False))
    out = np.empty(len(idx))
    for start in range(0, len(idx), 256):
        blk = idx[start:start + 256]
        vals = sample.grad_phi[blk] @ sample.y.T - sample.phi[None, :]
        out[start:start + 256] = vals.max(axis=1)
    return idx, out


def verify_duality(u: GridField | RadialGraphSample, params: FunctionalParams | None = None,
                   legendre_count: int | None = 2000, delta_cut: float | None = None) -> DualityReport:
    """Residuals of the duality identity and of the Legendre relation.

    ``max_rel``/``mean_rel`` use the closed-form D^2 phi; ``grid_*`` use
    :func:`grid_hessian_phi`.  The Legendre relation compares the discrete
    Legendre transform of the sample cloud with ``-1/u*`` against the budget
    ``5 h (1 + |x|) max|D^2 u|``.
    """
    sample = u if isinstance(u, RadialGraphSample) else radial_transform(u, delta_cut=delta_cut)
    n = sample.n
    lhs = det_of(sample.hess_u) / sample.star ** (n + 2)
    rhs = sample.phi ** (n + 2) * det_of(sample.hess_phi)
    rel = np.abs(lhs - rhs) / np.abs(lhs)
    rhs_grid = sample.phi ** (n + 2) * det_of(grid_hessian_phi(sample))
    rel_grid = np.abs(lhs - rhs_grid) / np.abs(lhs)
    h = float(max(sample.field.h))
    idx, pstar = discrete_legendre(sample, legendre_count)
    gap = np.abs(pstar + 1.0 / sample.star[idx])
    hmax = float(np.max(np.abs(sample.hess_u)))
    budget = 5.0 * h * (1.0 + np.linalg.norm(sample.x[idx], axis=1)) * hmax
    hg = domain_support(sample.field.domain, sample.grad_phi)
    return DualityReport(
        samples=len(sample), delta_cut=sample.delta_cut, max_rel=float(rel.max()),
        mean_rel=float(rel.mean()), grid_max_rel=float(rel_grid.max()),
        grid_mean_rel=float(rel_grid.mean()), legendre_max=float(gap.max()),
        legendre_budget=float(budget.min()), legendre_ok=bool(np.all(gap <= budget)),
        polar_violation=float(max(0.0, hg.max() - 1.0)), h=h)


def second_boundary_residual(sample: RadialGraphSample, params: FunctionalParams) -> np.ndarray:
    """Relative residual of det D^2 phi = lam (-phi*)^{n+2+k} / phi^{n+2+p}, with -phi* = 1/u*."""
    if params.p is None:
        raise ConfigError("params.p is required")
    n, k, p = sample.n, params.k, params.p
    target = params.lam * sample.star ** (-(n + 2 + k)) / sample.phi ** (n + 2 + p)
    return np.abs(det_of(sample.hess_phi) - target) / target


@dataclass
class PushforwardReport:
    bins: int
    max_rel: float
    mean_rel: float
    mu_total: float
    nu_total: float
    support_gap: float
    flagged: list
    mu: list = field(repr=False, default_factory=list)
    nu: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def support_gap(sample: RadialGraphSample, directions: int = 360) -> float:
    """max over directions e of 1 - max_i <g_i, e> / h_{polar}(e)."""
    dom = sample.field.domain
    g = sample.grad_phi
    if sample.n == 1:
        a, b = dom.params
        return float(max(1.0 - g[:, 0].max() * b, 1.0 - g[:, 0].min() * a))
    th = np.linspace(0.0, 2 * np.pi, directions, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=1)
    best = (g @ e.T).max(axis=0)
    return float(np.max(1.0 - best / dom.polar_support(th)))


def verify_pushforward(u: GridField, params: FunctionalParams, bins: int = 64,
                       min_samples: int = 3) -> PushforwardReport:
    """Compare nu(B) = int_B dz/(-phi*)^{n+2+k} with mu(grad phi^{-1}(B)), mu = lam dy/phi^{n+2+p}.

    In 1-D the bins split the polar interval evenly; masses are integrated
    exactly from monotone cubic interpolants of the samples, on the part of each
    bin covered by the samples, and bins outside the sample range are flagged.
    In 2-D the bins are polar-angle times radial cells of the polar body, both
    masses are sample sums, and bins with fewer than ``min_samples`` samples
    are flagged.  Flagged bins are left out of the maximum.
    """
    if params.p is None:
        raise ConfigError("params.p is required")
    sample = radial_transform(u)
    n, k, p, lam = sample.n, params.k, params.p, params.lam
    if n == 1:
        mu, nu, counts = _pushforward_1d(sample, k, p, lam, bins)
    else:
        mu, nu, counts = _pushforward_2d(sample, k, p, lam, bins)
    flagged = [int(b) for b in np.flatnonzero(counts < min_samples)]
    ok = (counts >= min_samples) & (nu > 0)
    rel = np.abs(mu[ok] - nu[ok]) / nu[ok]
    return PushforwardReport(bins=len(mu), max_rel=float(rel.max()), mean_rel=float(rel.mean()),
                             mu_total=float(mu.sum()), nu_total=float(nu.sum()),
                             support_gap=support_gap(sample), flagged=flagged,
                             mu=mu.tolist(), nu=nu.tolist())


def _pushforward_1d(sample, k, p, lam, bins):
    a, b = sample.field.domain.params
    edges = np.linspace(1.0 / a, 1.0 / b, bins + 1)
    order = np.argsort(sample.x[:, 0])
    z = sample.grad_phi[order, 0]
    y = sample.y[order, 0]
    if np.any(np.diff(z) <= 0) or np.any(np.diff(y) <= 0):
        raise ConfigError("grad phi is not increasing; u is not strictly convex")
    nu_dens = PchipInterpolator(z, sample.star[order] ** (3 + k)).antiderivative()
    mu_dens = PchipInterpolator(y, lam * sample.phi[order] ** (-(3 + p))).antiderivative()
    y_of_z = PchipInterpolator(z, y)
    lo = np.clip(edges[:-1], z[0], z[-1])
    hi = np.clip(edges[1:], z[0], z[-1])
    nu = nu_dens(hi) - nu_dens(lo)
    mu = mu_dens(y_of_z(hi)) - mu_dens(y_of_z(lo))
    # interpolation covers sparse bins; only bins outside the sample range count as empty
    counts = np.where(hi > lo, np.iinfo(np.int64).max, 0)
    return mu, nu, counts


def _pushforward_2d(sample, k, p, lam, bins):
    grid = sample.field.grid
    w = grid.weights[sample.index]
    n = 2
    # y-volume element u*/(-u)^{n+1} dx and z-volume element (-u) det D^2u/(u*)^{n+1} dx
    mu_w = lam * sample.phi ** (-(n + 2 + p)) * w * sample.star / (-sample.u) ** (n + 1)
    nu_w = sample.star ** (n + 2 + k) * w * (-sample.u) * det_of(sample.hess_u) / sample.star ** (n + 1)
    g = sample.grad_phi
    th = np.mod(np.arctan2(g[:, 1], g[:, 0]), 2 * np.pi)
    rad = np.hypot(g[:, 0], g[:, 1]) * sample.field.domain.support(th)   # in [0, 1) on the polar body
    n_ang = max(1, int(round(np.sqrt(bins))))
    n_rad = max(1, bins // n_ang)
    ia = np.minimum((th / (2 * np.pi) * n_ang).astype(int), n_ang - 1)
    ir = np.minimum((rad ** 2 * n_rad).astype(int), n_rad - 1)
    cell = ia * n_rad + ir
    size = n_ang * n_rad
    mu = np.bincount(cell, weights=mu_w, minlength=size)
    nu = np.bincount(cell, weights=nu_w, minlength=size)
    counts = np.bincount(cell, minlength=size)
    return mu, nu, counts
