"""Damped Newton solvers for Monge-Ampere Dirichlet problems with zero trace.

Both solvers work on the log form of the equation,

    log det D^2 u + k log u* - log F(x, u) = 0,

whose linearization ``u^{ij} d_ij + k (<x, grad .> - .)/u* - F_u/F`` stays
elliptic as long as the iterate is convex.  A step is shortened until the
iterate keeps positive principal second differences (and positive det and
u*), and the residual decreases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import ConvexDomain
from .errors import ConfigError, ConvexityLoss, NewtonDivergence, StarDegeneracy
from .field import GridField, det_of, gradient, hessian, star_values
from .functionals import FunctionalParams, cofactor
from .grid import Grid, get_grid
from .sources import Constant, Power, Shifted, Source

log = logging.getLogger(__name__)

DIRECT_LIMIT = 300_000
STAR_FLOOR = 1e-12
EPS_LADDER = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass
class SolveConfig:
    """Newton controls.

    ``grid`` is the number of points per axis; ``tol_residual`` bounds the
    max-norm of ``(u*)^k det D^2 u - F``.
    """

    grid: int = 129
    tol_residual: float = 1e-9
    max_newton: int = 50
    damping: float = 1.0
    convexity_guard: bool = True
    min_damping: float = 1e-6

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ConfigError("tol_residual must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if self.max_newton < 1:
            raise ConfigError("max_newton must be at least 1")


@dataclass
class SolveResult:
    """Converged field plus its convergence record."""

    u: GridField
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass
class _State:
    values: np.ndarray
    ok: bool
    reason: str = ""
    hess: np.ndarray | None = None
    det: np.ndarray | None = None
    star: np.ndarray | None = None
    F: np.ndarray | None = None
    logres: np.ndarray | None = None
    raw: np.ndarray | None = None

    @property
    def merit(self) -> float:
        return float(self.logres @ self.logres)

    @property
    def raw_max(self) -> float:
        return float(np.max(np.abs(self.raw)))


class SemilinearProblem:
    """Residual and Jacobian of ``(u*)^k det D^2 u = F(x, u)`` on one grid."""

    def __init__(self, grid: Grid, k: float, F: Source, guard: bool = True):
        self.grid = grid
        self.k = float(k)
        self.F = F
        self.guard = guard
        if grid.dim == 2:
            self._X = [sp.diags(grid.points[:, a]) @ grid.D1[a] for a in range(2)]
        else:
            self._X = [sp.diags(grid.points[:, 0]) @ grid.D1[0]]
        self._XD = sum(self._X[1:], self._X[0]).tocsr()

    def evaluate(self, values: np.ndarray) -> _State:
        g = self.grid
        u = GridField(g, values)
        H = hessian(u)
        if self.guard:
            for a in range(g.dim):
                if np.any(H[:, a, a] <= 0):
                    return _State(values, False, "convexity")
        det = det_of(H)
        if np.any(det <= 0):
            return _State(values, False, "convexity")
        st = star_values(g.points, gradient(u), values)
        if self.k != 0:
            if np.min(st) < STAR_FLOOR:
                return _State(values, False, "star")
        Fv = self.F.value(g.points, values)
        if np.any(~(Fv > 0)):
            return _State(values, False, "source")
        logres = np.log(det) - np.log(Fv)
        raw = det - Fv
        if self.k != 0:
            logres = logres + self.k * np.log(st)
            raw = st ** self.k * det - Fv
        return _State(values, True, "", H, det, st, Fv, logres, raw)

    def jacobian(self, s: _State) -> sp.csr_matrix:
        g = self.grid
        inv = cofactor(s.hess) / s.det[:, None, None]
        J = sp.diags(inv[:, 0, 0]) @ g.D2[0]
        if g.dim == 2:
            J = J + sp.diags(inv[:, 1, 1]) @ g.D2[1] + sp.diags(2 * inv[:, 0, 1]) @ g.Dxy
        if self.k != 0:
            J = J + sp.diags(self.k / s.star) @ (self._XD - sp.identity(g.m))
        if self.F.depends_on_u:
            J = J - sp.diags(self.F.du(g.points, s.values) / s.F)
        return J.tocsr()


def linear_solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct sparse solve; diagonally preconditioned GMRES on very large grids."""
    if A.shape[0] <= DIRECT_LIMIT:
        return spla.spsolve(A.tocsc(), b)
    d = A.diagonal()
    M = sp.diags(1.0 / np.where(d != 0, d, 1.0))
    x, info = spla.gmres(A, b, M=M, rtol=1e-12, restart=200, maxiter=50)
    if info != 0:
        raise NewtonDivergence(f"GMRES did not converge (info={info})")
    return x


def newton(problem: SemilinearProblem, u0: np.ndarray, cfg: SolveConfig) -> SolveResult:
    """Damped Newton iteration on the log residual of ``problem``."""
    s = problem.evaluate(np.asarray(u0, dtype=float))
    if not s.ok:
        if s.reason == "star":
            raise StarDegeneracy("initial guess has u* below 1e-12")
        raise ConvexityLoss(f"initial guess is not admissible ({s.reason})")
    history = [s.raw_max]
    it = 0
    while s.raw_max > cfg.tol_residual:
        if it >= cfg.max_newton:
            raise NewtonDivergence(
                f"residual {s.raw_max:.3e} above {cfg.tol_residual:.1e} after {it} Newton steps")
        delta = linear_solve(problem.jacobian(s), -s.logres)
        if not np.all(np.isfinite(delta)):
            raise NewtonDivergence("Newton correction is not finite")
        alpha = cfg.damping
        last = ""
        while True:
            trial = problem.evaluate(s.values + alpha * delta)
            if trial.ok and trial.merit < s.merit:
                break
            last = trial.reason or "no decrease"
            alpha *= 0.5
            if alpha < cfg.min_damping:
                if last == "convexity":
                    raise ConvexityLoss(f"damping underflow at step {it}: every step loses convexity")
                if last == "star":
                    raise StarDegeneracy(f"u* degenerates below {STAR_FLOOR} at step {it}")
                raise NewtonDivergence(
                    f"line search failed at step {it} (residual {s.raw_max:.3e}, {last})")
        s = trial
        it += 1
        history.append(s.raw_max)
        log.debug("newton %d: alpha=%.3g residual=%.3e", it, alpha, s.raw_max)
    return SolveResult(GridField(problem.grid, s.values), s.raw_max, it, history)


def residual(u: GridField, k: float, F: Source) -> np.ndarray:
    """Nodal residual ``(u*)^k det D^2 u - F(x, u)`` with no admissibility checks."""
    det = det_of(hessian(u))
    Fv = F.value(u.points, u.values)
    if k == 0:
        return det - Fv
    st = star_values(u.points, gradient(u), u.values)
    return st ** k * det - Fv


def poisson_guess(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Zero-trace solution of the Poisson problem Laplace(u) = rhs."""
    return spla.spsolve(grid.laplacian.tocsc(), np.broadcast_to(rhs, (grid.m,)).astype(float))


def _rhs_values(grid: Grid, f) -> np.ndarray:
    if callable(f):
        vals = np.asarray(f(grid.points), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    return np.broadcast_to(vals, (grid.m,)).copy()


def solve_fixed_rhs(domain, f, cfg: SolveConfig | None = None, u0=None) -> SolveResult:
    """Solve det D^2 u = f(x), u = 0 on the boundary.

    ``f`` is a positive scalar, an array on the interior nodes or a callable of
    the (m, dim) node coordinates.  The initial guess solves
    ``Laplace(u) = n f^{1/n}`` unless ``u0`` is given.
    """
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    grid = get_grid(domain, cfg.grid)
    fv = _rhs_values(grid, f)
    if np.any(~(fv > 0)):
        raise ConfigError("the right-hand side must be positive")
    n = grid.dim
    if u0 is None:
        u0 = poisson_guess(grid, n * fv ** (1.0 / n))
    return newton(SemilinearProblem(grid, 0.0, Constant(fv), cfg.convexity_guard), u0, cfg)


def solve_semilinear(domain, params: FunctionalParams, F: Source, cfg: SolveConfig | None = None,
                     u0=None) -> SolveResult:
    """Solve (u*)^k det D^2 u = F(x, u) with zero boundary trace.

    The default initial guess is the Poisson guess for ``F(x, 0)``; problems
    with ``k != 0`` or far-away solutions should pass ``u0``.
    """
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    params.require_flow()
    grid = get_grid(domain, cfg.grid)
    if u0 is None:
        f0 = F.value(grid.points, np.zeros(grid.m))
        if np.any(~(f0 > 0)):
            raise ConfigError("F(x, 0) is not positive; supply an initial guess")
        n = grid.dim
        guess = poisson_guess(grid, n * f0 ** (1.0 / n))
    else:
        guess = _initial_values(grid, u0)
    return newton(SemilinearProblem(grid, params.k, F, cfg.convexity_guard), guess, cfg)


def _initial_values(grid: Grid, u0) -> np.ndarray:
    if isinstance(u0, GridField):
        if u0.grid is not grid:
            raise ConfigError("initial guess lives on a different grid")
        return u0.values.copy()
    if isinstance(u0, SolveResult):
        return _initial_values(grid, u0.u)
    return np.asarray(u0, dtype=float).reshape(grid.m).copy()


def solve_degenerate(domain, params: FunctionalParams, cfg: SolveConfig | None = None,
                     u0=None, ladder=EPS_LADDER, k_source: float | None = None) -> SolveResult:
    """Solve (u*)^k det D^2 u = lam (-u)^p through the shifted sources lam (eps - u)^p.

    Each rung of ``ladder`` is warm-started from the previous one; the result
    is the solution at the last (smallest) eps, and ``trace`` records
    (eps, residual, iterations, min u) per rung.
    """
    if params.p is None:
        raise ConfigError("params.p is required")
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    guess = u0
    trace = []
    res = None
    for eps in ladder:
        src = Shifted(p=params.p, eps=eps, lam=params.lam)
        res = solve_semilinear(domain, params, src, cfg, u0=guess)
        trace.append((eps, res.residual, res.iterations, float(res.u.values.min())))
        guess = res.u
    res.trace = trace
    return res


def degenerate_residual(u: GridField, params: FunctionalParams) -> np.ndarray:
    """Residual of the unshifted equation (u*)^k det D^2 u - lam |u|^p."""
    return residual(u, params.k, Power(p=params.p, lam=params.lam))
