"""Finite-difference solvers and checks for generalized Monge-Ampere functionals.

The package works with convex fields ``u`` vanishing on the boundary of a
convex planar domain or interval, the star function ``u* = <x, grad u> - u``
and the equations ``(u*)^k det D^2 u = F(x, u)``.
"""
__version__ = "0.1.0"

from .domain import ConvexDomain
from .errors import (ConfigError, ContinuationStall, ConvexityLoss, MagmaError, NewtonDivergence,
                     QuadratureError, ShootingError, SingularIntegrandError, SolverError,
                     StarDegeneracy, TimeStepUnderflow)
from .field import GridField, StarField, integrate, load_csv, make_test_field, save_csv, star
from .functionals import (FunctionalParams, eval_H, eval_Hh, eval_Hnorm, eval_J, first_variation,
                          rayleigh, report, scale_invariant, second_variation, sobolev_check)
from .grid import Grid, get_grid
from .ma_core import SolveConfig, SolveResult, solve_degenerate, solve_fixed_rhs, solve_semilinear
from .flow import FlowConfig, FlowState, flow_run, flow_step
from .sources import Callback, Constant, Continuation, Power, Shifted, parse_source
from .stationary import (EigenResult, rescale_solution, solve_eigen, solve_subcritical,
                         solve_supercritical)
from .transport import radial_transform, verify_duality, verify_pushforward

__all__ = [name for name in dir() if not name.startswith("_")]
