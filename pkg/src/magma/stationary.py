"""Drivers for the Dirichlet problems (u*)^k det D^2 u = lam |u|^p, u = 0 on the boundary.

* ``p < n + k``: a unique nontrivial solution (:func:`solve_subcritical`).
* ``p > n + k``: a nontrivial solution of mountain-pass type
  (:func:`solve_supercritical`).
* ``p = n + k``: the eigenvalue problem (:func:`solve_eigen`), approached by
  continuation in ``s`` for ``(u*)^k det D^2 u = (1 - s u)^{n+k}`` and polished
  by normalized inverse iteration.

Solutions of the degenerate equations are computed with shifted sources
``(eps - u)^p`` on a decreasing ladder of ``eps``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import ConvexDomain
from .errors import ConfigError, ContinuationStall, MagmaError, NewtonDivergence, SolverError
from .field import GridField, make_test_field, star_values, gradient
from .functionals import FunctionalParams, eval_J, lp_power, rayleigh
from .grid import get_grid
from .ma_core import (EPS_LADDER, SolveConfig, degenerate_residual, residual, solve_degenerate,
                      solve_fixed_rhs, solve_semilinear)
from .sources import Continuation, Power, Shifted

log = logging.getLogger(__name__)

TRIAL_RECIPES = ("quadratic(1)", "cosine-bump(1)", "exp-bump(1)", "exp-bump(2)",
                 "random-convex(1)", "random-convex(2)", "random-convex(3)")


def rescale_solution(u: GridField, params: FunctionalParams, lambda_target: float) -> GridField:
    """Map a solution for ``params.lam`` to one for ``lambda_target``.

    With ``c = (lambda_target / lam)^{1/(n+k-p)}`` the field ``c u`` solves the
    equation with ``lambda_target``; its residual is ``c^{n+k}`` times the
    residual of ``u``.
    """
    if params.p is None:
        raise ConfigError("params.p is required")
    q = params.n + params.k - params.p
    if q == 0:
        raise ConfigError("p = n + k is scale invariant; rescaling cannot change lambda")
    if not lambda_target > 0:
        raise ConfigError("lambda_target must be positive")
    c = (lambda_target / params.lam) ** (1.0 / q)
    return u * c


@dataclass
class DirichletResult:
    """Solution of a sub- or supercritical problem and its checks."""

    u: GridField
    params: FunctionalParams
    residual: float
    trace: list = field(default_factory=list)
    uniqueness_gap: float | None = None
    J: float | None = None
    amplitude: float | None = None
    notes: list = field(default_factory=list)


def _init_field(domain, grid, init, scale=1.0) -> GridField:
    if isinstance(init, GridField):
        return init * scale
    return make_test_field(domain, init, grid=grid) * scale


def solve_subcritical(domain, params: FunctionalParams, cfg: SolveConfig | None = None,
                      inits=("quadratic(1)", "cosine-bump(0.5)"), ladder=EPS_LADDER,
                      check_uniqueness: bool = True) -> DirichletResult:
    """Nontrivial solution for ``0 < p < n + k``, with a uniqueness cross-check.

    The problem is solved for ``lam = 1`` from each initial recipe in
    ``inits`` and rescaled to ``params.lam``; the max-norm gap between the
    first two solutions is reported in ``uniqueness_gap``.  A gap above
    ``10 * tol_residual`` raises a warning and is recorded in ``notes``.
    """
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    if params.p is None or not 0 < params.p < params.n + params.k:
        raise ConfigError("subcritical solve needs 0 < p < n + k")
    unit = FunctionalParams(params.n, params.k, params.p, 1.0)
    grid = get_grid(domain, cfg.grid)
    sols = []
    for init in inits[: 2 if check_uniqueness else 1]:
        res = solve_degenerate(domain, unit, cfg, u0=_init_field(domain, grid, init), ladder=ladder)
        sols.append(res)
    out = DirichletResult(u=rescale_solution(sols[0].u, unit, params.lam), params=params,
                          residual=0.0, trace=sols[0].trace)
    out.residual = float(np.max(np.abs(degenerate_residual(out.u, params))))
    if check_uniqueness and len(sols) > 1:
        gap = float(np.max(np.abs(sols[0].u.values - sols[1].u.values)))
        out.uniqueness_gap = gap
        if gap > 10 * cfg.tol_residual:
            msg = f"subcritical solutions from {inits[0]} and {inits[1]} differ by {gap:.3e}"
            out.notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return out


def mountain_pass_scale(domain: ConvexDomain, params: FunctionalParams) -> float:
    """Amplitude ``((n+k+1) a / ((p+1) A))^{1/(p-n-k)}`` of the energy barrier.

    ``a`` and ``A`` are the constants of ``J >= a |u|^{n+k+1} - A |u|^{p+1}``:
    ``a = |polar body| (d/diam)^{n+k+1} / (n+k+1)`` from the Sobolev bound and
    ``|u(0)| >= (d/diam) |u|_inf``, and ``A = lam |domain| / (p+1)``.
    """
    n, k, p = params.n, params.k, params.p
    deg = n + k + 1
    ratio = domain.boundary_distance(np.zeros(n)) / domain.diameter()
    a = domain.polar_volume() * ratio ** deg / deg
    A = params.lam * domain.area() / (p + 1)
    return (deg * a / ((p + 1) * A)) ** (1.0 / (p - n - k))


def solve_supercritical(domain, params: FunctionalParams, cfg: SolveConfig | None = None,
                        shape: GridField | None = None, factors=(0.5, 1, 2, 4, 8),
                        ladder=EPS_LADDER) -> DirichletResult:
    """Nontrivial solution for ``p > n + k > 0`` by continuation from ``c * shape``.

    ``shape`` defaults to the normalized eigenfunction for the same ``k``.
    Amplitudes ``factor * mountain_pass_scale`` are tried in order; the first
    Newton ladder that ends at a field of amplitude above a tenth of the
    scale, with ``J > 0``, is returned.
    """
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    n, k, p = params.n, params.k, params.p
    if p is None or not p > n + k > 0:
        raise ConfigError("supercritical solve needs p > n + k > 0")
    grid = get_grid(domain, cfg.grid)
    if shape is None:
        shape = solve_eigen(domain, FunctionalParams(n, k), cfg).eigenfunction
    shape = shape / shape.max_abs()
    scale = mountain_pass_scale(domain, params)
    attempts = []
    for fac in factors:
        amp = fac * scale
        try:
            res = solve_degenerate(domain, params, cfg, u0=shape * amp, ladder=ladder)
        except SolverError as exc:
            attempts.append((amp, f"failed: {exc}"))
            continue
        size = res.u.max_abs()
        J = eval_J(res.u, params, Power(p=p, lam=params.lam))
        attempts.append((amp, size, J))
        if size > 0.1 * scale and J > 0:
            out = DirichletResult(u=res.u, params=params, residual=0.0, trace=res.trace, J=J,
                                  amplitude=amp, notes=[f"attempts: {attempts}"])
            out.residual = float(np.max(np.abs(degenerate_residual(res.u, params))))
            return out
    raise SolverError(f"no nontrivial supercritical solution from amplitudes {attempts}")


@dataclass
class EigenResult:
    """Eigenvalue estimate and normalized eigenfunction (max |u| = 1, u < 0)."""

    lam: float
    eigenfunction: GridField
    s_trace: list
    rayleigh_value: float
    residual: float
    lam_continuation: float | None = None
    iterations: int = 0
    lam_history: list = field(default_factory=list)

    @property
    def trace_monotone(self) -> bool:
        """Whether max|u_s| is nondecreasing along the continuation."""
        sizes = [row[1] for row in self.s_trace]
        return all(b >= a for a, b in zip(sizes, sizes[1:]))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "lambda_continuation": self.lam_continuation,
                "rayleigh": self.rayleigh_value, "residual": self.residual,
                "iterations": self.iterations,
                "s_trace": [list(map(float, row)) for row in self.s_trace]}


def eigen_residual(u: GridField, params: FunctionalParams, lam: float) -> np.ndarray:
    q = params.n + params.k
    return residual(u, params.k, Power(p=q, lam=lam))


def trial_rayleigh_min(domain, params: FunctionalParams, grid) -> tuple[float, str]:
    """Smallest Rayleigh quotient over the trial recipes (an upper bound of lambda)."""
    best = (math.inf, "")
    for recipe in TRIAL_RECIPES:
        try:
            u = make_test_field(domain, recipe, grid=grid)
            best = min(best, (rayleigh(u, params), recipe))
        except MagmaError:
            continue
    return best


def continuation(domain, params: FunctionalParams, cfg: SolveConfig, s_start: float | None = None,
                 max_norm: float = 1e4, max_steps: int = 400, u0=None) -> tuple[float, list, GridField]:
    """Follow (u*)^k det D^2 u = (1 - s u)^{n+k} in s until the solutions blow up.

    Returns the extrapolated blow-up value s~ (zero of the line through the
    last five points of (s, 1/max|u_s|)), the trace of (s, max|u_s|) and the
    last solution.
    """
    q = params.n + params.k
    grid = get_grid(domain, cfg.grid)
    lam_up, _ = trial_rayleigh_min(domain, FunctionalParams(params.n, params.k), grid)
    s_up = lam_up ** (1.0 / q)
    ds = (s_start if s_start is not None else 0.2 * s_up)
    s = 0.0
    if u0 is None and params.k != 0:
        u0 = make_test_field(domain, "quadratic(1)", grid=grid)
    res = solve_semilinear(domain, params, Continuation(s=0.0, q=q), cfg, u0=u0)
    trace = [(0.0, res.u.max_abs())]
    u = res.u
    for _ in range(max_steps):
        trial_s = s + ds
        try:
            nxt = solve_semilinear(domain, params, Continuation(s=trial_s, q=q), cfg, u0=u)
            size = nxt.u.max_abs()
        except SolverError:
            nxt, size = None, math.inf
        if nxt is None or size > 2 * trace[-1][1]:
            ds *= 0.5
            if ds < 1e-12 * max(s, 1.0):
                break
            continue
        s, u = trial_s, nxt.u
        trace.append((s, size))
        if size > max_norm:
            break
        # aim for a 30 percent growth of max|u| per step, using 1/|u| ~ linear in s
        if len(trace) >= 2:
            (s0, m0), (s1, m1) = trace[-2], trace[-1]
            slope = (1 / m1 - 1 / m0) / (s1 - s0)
            if slope < 0:
                ds = min(2 * ds, 0.23 / m1 / -slope)
    else:
        raise ContinuationStall(f"no blow-up after {max_steps} steps (s = {s:.6g})")
    if s > 1.05 * s_up:
        raise ContinuationStall(f"continuation passed s = {s:.6g} beyond the Rayleigh bound {s_up:.6g}")
    if len(trace) < 6:
        raise ContinuationStall("too few continuation points to extrapolate the blow-up")
    tail = np.array(trace[-5:])
    slope, icpt = np.polyfit(tail[:, 0], 1.0 / tail[:, 1], 1)
    s_tilde = -icpt / slope
    return float(s_tilde), trace, u


def inverse_iteration(u0: GridField, params: FunctionalParams, cfg: SolveConfig, lam0: float | None = None,
                      tol: float | None = None, max_iter: int = 300,
                      patience: int = 10) -> tuple[float, GridField, list]:
    """Normalized inverse iteration for (u*)^k det D^2 u = lam |u|^{n+k}.

    Each step solves ``det D^2 w = lam_m (w_m*)^{-k} |w_m|^{n+k}``, normalizes
    to ``max|w| = 1`` and sets ``lam_{m+1}`` to the Rayleigh quotient of ``w``.
    Stops once the eigen residual is below ``tol`` (default
    ``cfg.tol_residual``); inner solves use a tenth of that tolerance.
    """
    q = params.n + params.k
    tol = cfg.tol_residual if tol is None else tol
    inner = replace(cfg, tol_residual=0.1 * tol)
    grid = u0.grid
    w = u0 / u0.max_abs()
    lam = rayleigh(w, params) if lam0 is None else lam0
    hist = [lam]
    best, since = math.inf, 0
    for _ in range(max_iter):
        st = star_values(grid.points, gradient(w), w.values)
        rhs = lam * np.abs(w.values) ** q
        if params.k != 0:
            rhs = rhs * st ** (-params.k)
        try:
            nxt = solve_fixed_rhs(grid.domain, rhs, inner, u0=w.values).u
        except NewtonDivergence:
            # round-off floor of the inner solve; fall back to the outer tolerance
            nxt = solve_fixed_rhs(grid.domain, rhs, replace(cfg, tol_residual=tol), u0=w.values).u
        w = nxt / nxt.max_abs()
        lam = rayleigh(w, params)
        hist.append(lam)
        res = float(np.max(np.abs(eigen_residual(w, params, lam))))
        if res <= tol:
            return lam, w, hist
        if res < 0.9 * best:
            best, since = res, 0
        else:
            since += 1
            if since >= patience:
                break
    raise SolverError(f"inverse iteration stalled with eigen residual {best:.2e} above {tol:.1e}")


def solve_eigen(domain, params: FunctionalParams, cfg: SolveConfig | None = None,
                polish: bool = True, u0=None) -> EigenResult:
    """Eigenvalue and eigenfunction of (u*)^k det D^2 u = lam |u|^{n+k}.

    For ``n + k > 0`` the continuation estimate ``s~^{n+k}`` is computed first
    and the eigenfunction ``u_s / max|u_s|`` is polished by inverse iteration.
    For ``k = -n`` only inverse iteration is used.
    """
    cfg = cfg or SolveConfig()
    domain = ConvexDomain.from_descriptor(domain)
    params = FunctionalParams(params.n, params.k, params.n + params.k, 1.0)
    params.require_flow()
    q = params.n + params.k
    grid = get_grid(domain, cfg.grid)
    if q == 0:
        start = u0 if u0 is not None else make_test_field(domain, "quadratic(1)", grid=grid)
        lam, w, hist = inverse_iteration(start, params, cfg)
        return EigenResult(lam=lam, eigenfunction=w, s_trace=[], rayleigh_value=rayleigh(w, params),
                           residual=float(np.max(np.abs(eigen_residual(w, params, lam)))),
                           iterations=len(hist) - 1, lam_history=hist)
    s_tilde, trace, u_last = continuation(domain, params, cfg, u0=u0)
    lam_c = s_tilde ** q
    w = u_last / u_last.max_abs()
    lam, hist = lam_c, [lam_c]
    if polish:
        lam, w, hist = inverse_iteration(w, params, cfg, lam0=lam_c)
    return EigenResult(lam=lam, eigenfunction=w, s_trace=trace, rayleigh_value=rayleigh(w, params),
                       residual=float(np.max(np.abs(eigen_residual(w, params, lam)))),
                       lam_continuation=lam_c, iterations=len(hist) - 1, lam_history=hist)
