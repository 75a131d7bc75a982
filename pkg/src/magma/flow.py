"""Explicit time stepping of the parabolic flow

    u_t = log det D^2 u + k log u* - log F(x, u),   u = 0 on the boundary,

with step acceptance by admissibility (convexity, positive u* and F) and by
monotone decay of the energy J.  Rejected steps halve ``dt``.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TimeStepUnderflow
from .field import GridField
from .functionals import FunctionalParams, cofactor
from .ma_core import SemilinearProblem
from .sources import Source

log = logging.getLogger(__name__)

MAX_HALVINGS = 30


@dataclass
class FlowConfig:
    """Controls of :func:`flow_run`; ``dt0=None`` means ``h^2/4``."""

    dt0: float | None = None
    tmax: float = 100.0
    tol: float = 1e-8
    blowup_factor: float = 1e3
    collapse_factor: float = 1e-3
    max_steps: int = 1_000_000
    growth: float = 1.05
    dt_max: float = np.inf
    j_tol: float = 1e-8
    check_barrier: bool = True
    stability_cap: bool = True
    cap_safety: float = 0.9
    barrier_rtol: float = 1e-6

    def __post_init__(self):
        if self.dt0 is not None and not self.dt0 > 0:
            raise ConfigError("dt0 must be positive")
        if not (self.tol > 0 and self.tmax > 0):
            raise ConfigError("tol and tmax must be positive")


@dataclass
class FlowState:
    """Current iterate of the flow and its record."""

    u: GridField
    t: float = 0.0
    dt_last: float = 0.0
    J: float = np.nan
    J_history: list = field(default_factory=list)
    residual: float = np.inf
    diagnostics: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    reason: str = "running"
    dissipation_defect: list = field(default_factory=list)
    barrier: tuple | None = None

    def write_history(self, path) -> None:
        """CSV with columns t, J, residual, max|u|."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "J", "residual", "umax"])
            for row in self.history:
                w.writerow([repr(float(v)) for v in row])


class _Evaluator:
    def __init__(self, grid, params: FunctionalParams, F: Source):
        params.require_flow()
        self.params = params
        self.F = F
        self.grid = grid
        self.problem = SemilinearProblem(grid, params.k, F, guard=True)
        self._d2 = [D.diagonal() for D in grid.D2]
        self._dxy = grid.Dxy.diagonal() if grid.dim == 2 else None
        self._dx = self.problem._XD.diagonal()

    def __call__(self, values):
        s = self.problem.evaluate(values)
        if not s.ok:
            return s, None, None
        return s, s.logres, self.energy(s)

    def energy(self, s) -> float:
        """J from the already evaluated derivatives (same value as eval_J)."""
        w = self.grid.weights
        k = self.params.k
        sk = s.star ** k if k != 0 else 1.0
        H = float(w @ (sk * (-s.values) * s.det)) / self.params.degree
        return H - float(w @ self.F.primitive(self.grid.points, s.values))

    def dt_cap(self, s) -> float:
        """Largest dt keeping the linearized explicit update monotone, 1/max|A_ii|."""
        inv = cofactor(s.hess) / s.det[:, None, None]
        diag = inv[:, 0, 0] * self._d2[0]
        if self.grid.dim == 2:
            diag = diag + inv[:, 1, 1] * self._d2[1] + 2 * inv[:, 0, 1] * self._dxy
        if self.params.k != 0:
            diag = diag + self.params.k * (self._dx - 1.0) / s.star
        if self.F.depends_on_u:
            diag = diag - self.F.du(self.grid.points, s.values) / s.F
        return 1.0 / float(np.max(np.abs(diag)))


def barrier_bound(u0: GridField, params: FunctionalParams, F: Source) -> tuple[float, float] | None:
    """(eps, r) of the stationary supersolution eps (|x|^2 - r^2).

    ``r`` is the inradius about the origin.  ``eps`` is small enough for the
    barrier to lie above ``u0`` and to be a supersolution of the flow when
    ``F >= eta > 0``; then ``u(t, 0) <= -eps r^2`` for all t.  Returns None
    when no positive lower bound of F is known.
    """
    eta = F.lower_bound()
    if not eta > 0:
        return None
    n, k = params.n, params.k
    r = u0.domain.boundary_distance(np.zeros(n))
    # det = (2 eps)^n and eps r^2 <= v* <= 2 eps r^2 in the ball
    c = 2.0 * r * r if k >= 0 else r * r
    eps_pde = (eta / (2.0 ** n * c ** k)) ** (1.0 / (n + k)) if n + k > 0 else np.inf
    x2 = np.sum(u0.points ** 2, axis=1)
    inside = x2 < r * r
    if not np.any(inside):
        return None
    eps_init = float(np.min(-u0.values[inside] / (r * r - x2[inside])))
    eps = min(eps_pde, eps_init)
    if not eps > 0:
        return None
    return eps, r


def flow_step(state: FlowState, F: Source, params: FunctionalParams, dt: float,
              cfg: FlowConfig | None = None, _ev: _Evaluator | None = None) -> FlowState:
    """One accepted explicit step starting from trial size ``dt``.

    The step is retried with halved ``dt`` (at most 30 times) until the new
    iterate is admissible and J does not increase beyond
    ``j_tol * (1 + |J|)``.
    """
    cfg = cfg or FlowConfig()
    ev = _ev or _Evaluator(state.u.grid, params, F)
    s0, rate, J0 = ev(state.u.values)
    if rate is None:
        raise ConfigError(f"flow state is not admissible ({s0.reason})")
    if cfg.stability_cap:
        dt = min(dt, cfg.cap_safety * ev.dt_cap(s0))
    for _ in range(MAX_HALVINGS + 1):
        new = state.u.values + dt * rate
        s1, rate1, J1 = ev(new)
        if rate1 is not None and J1 <= J0 + cfg.j_tol * (1 + abs(J0)):
            break
        state.rejected += 1
        dt *= 0.5
    else:
        raise TimeStepUnderflow(f"step rejected {MAX_HALVINGS} times at t = {state.t:.6g}")
    grid = state.u.grid
    # discrete dissipation: dJ/dt = -int u_t ((u*)^k det - F)
    power = float(grid.weights @ (rate * s0.raw))
    state.dissipation_defect.append((J1 - J0) / dt + power)
    state.u = GridField(grid, new)
    state.t += dt
    state.dt_last = dt
    state.J = J1
    state.J_history.append((state.t, J1))
    state.accepted += 1
    state.residual = float(np.max(np.abs(rate1)))
    umax = state.u.max_abs()
    u0 = state.u.origin_value()
    state.diagnostics = {"umax": umax, "u_origin": u0, "min_star": float(s1.star.min())}
    state.history.append((state.t, J1, state.residual, umax))
    if state.barrier is not None:
        eps, r = state.barrier
        if u0 > -eps * r * r * (1 - cfg.barrier_rtol):
            state.diagnostics["barrier_violation"] = u0 + eps * r * r
    return state


def flow_run(u0: GridField, F: Source, params: FunctionalParams,
             cfg: FlowConfig | None = None) -> FlowState:
    """Run the flow until it is stationary, blows up, collapses or times out.

    Termination reasons: ``converged`` (``max|u_t| <= tol``), ``blow-up``
    (``max|u| > blowup_factor * max|u0|``), ``collapse`` (``max|u|`` below
    ``collapse_factor * max|u0|``, i.e. the zero field attracts), ``timeout``
    and ``max-steps``.
    """
    cfg = cfg or FlowConfig()
    if not u0.origin_value() < 0:
        raise ConfigError("the initial field must be negative at the origin")
    ev = _Evaluator(u0.grid, params, F)
    s, rate, J = ev(u0.values)
    if rate is None:
        raise ConfigError(f"initial field is not admissible ({s.reason})")
    umax0 = u0.max_abs()
    state = FlowState(u=u0.copy(), J=J, residual=float(np.max(np.abs(rate))))
    state.J_history.append((0.0, J))
    state.history.append((0.0, J, state.residual, umax0))
    if cfg.check_barrier:
        state.barrier = barrier_bound(u0, params, F)
    dt = cfg.dt0 if cfg.dt0 is not None else min(u0.grid.h) ** 2 / 4
    violations = 0
    while True:
        if state.residual <= cfg.tol:
            state.reason = "converged"
            break
        if state.t >= cfg.tmax:
            state.reason = "timeout"
            break
        if state.accepted >= cfg.max_steps:
            state.reason = "max-steps"
            break
        flow_step(state, F, params, min(dt, cfg.dt_max, cfg.tmax - state.t + 1e-300), cfg, ev)
        if "barrier_violation" in state.diagnostics:
            violations += 1
        dt = state.dt_last * cfg.growth
        umax = state.diagnostics["umax"]
        if umax > cfg.blowup_factor * umax0:
            state.reason = "blow-up"
            break
        if umax < cfg.collapse_factor * umax0:
            state.reason = "collapse"
            break
    state.diagnostics["barrier_violations"] = violations
    if violations:
        warnings.warn(f"barrier bound violated on {violations} steps", RuntimeWarning, stacklevel=2)
    log.info("flow finished: %s after %d steps (t=%.4g)", state.reason, state.accepted, state.t)
    return state
