"""Command-line interface: ``magma <command> [flags]``.

Every run writes into its output directory a ``manifest.json`` (config echo,
versions, wall time, termination reason) next to the result JSON and CSV
artifacts.  The directory is ``--out``, else ``$MAGMA_OUT/<command>``, else
``magma-runs/<command>``.  Exit codes: 0 success, 2 solver non-convergence,
3 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .domain import ConvexDomain
from .errors import ConfigError, MagmaError, SolverError
from .field import GridField, load_csv, make_test_field, save_csv
from .flow import FlowConfig, flow_run
from .functionals import FunctionalParams, report, scale_invariant, sobolev_check
from .grid import get_grid
from .ma_core import SolveConfig, solve_degenerate, solve_fixed_rhs, solve_semilinear
from .oracle1d import ShootingProblem, shoot
from .sources import Constant, Power, parse_source
from .stationary import solve_eigen, solve_subcritical, solve_supercritical
from .transport import radial_transform, second_boundary_residual, verify_duality, verify_pushforward

log = logging.getLogger("magma")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

COMMANDS = ("solve", "solve-dirichlet", "flow", "eigen", "functional", "invariant", "sobolev",
            "transport-check", "oracle", "convergence-study")

INVARIANT_RECIPES = ("quadratic(1)", "cosine-bump(1)", "exp-bump(1)", "random-convex(1)",
                     "random-convex(2)")


@dataclass
class RunConfig:
    """Validated settings of one command."""

    command: str
    domain: str = "interval:-1,1"
    grid: int = 129
    k: float = 0.0
    p: float | None = None
    lam: float = 1.0
    eps: float = 0.1
    s: float = 0.0
    rhs: str = "1"
    regime: str = "auto"
    field: str | None = None
    recipe: str = "quadratic(1)"
    u0: str = "quadratic(1)"
    F: str | None = None
    dt0: float | None = None
    tmax: float = 100.0
    tol: float = 1e-9
    flow_tol: float = 1e-8
    max_newton: int = 50
    eigen: bool = False
    count: int = 20
    bins: int = 64
    base: str = "fixed-rhs"
    ladder: list = dc_field(default_factory=lambda: [65, 129, 257, 513])
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 17 <= int(self.grid) <= 1025:
            raise ConfigError("grid N must lie in [17, 1025]")
        for name in ("tol", "flow_tol", "tmax", "lam", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dt0 is not None and not self.dt0 > 0:
            raise ConfigError("dt0 must be positive")
        if any(not 17 <= int(n) <= 1025 for n in self.ladder) or len(self.ladder) < 2:
            raise ConfigError("the ladder needs at least two grids in [17, 1025]")
        if self.command in ("functional", "transport-check") and self.field is None and not self.recipe:
            raise ConfigError(f"{self.command} needs --field or --recipe")
        if self.command == "solve-dirichlet" and self.p is None and self.regime != "eigen":
            raise ConfigError("solve-dirichlet needs --p")
        if self.regime not in ("auto", "sub", "super", "eigen"):
            raise ConfigError(f"unknown regime {self.regime!r}")

    def domain_obj(self) -> ConvexDomain:
        return ConvexDomain.from_descriptor(self.domain)

    def solve_config(self, grid: int | None = None) -> SolveConfig:
        return SolveConfig(grid=int(grid or self.grid), tol_residual=self.tol, max_newton=self.max_newton)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="magma", description="Generalized Monge-Ampere solvers and checks.")
    parser.add_argument("--version", action="version", version=f"magma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--domain", default=S, help="e.g. interval:-1,1, ball:1 or a JSON descriptor")
    common.add_argument("--grid", type=int, default=S)
    common.add_argument("--k", type=float, default=S)
    common.add_argument("--p", type=float, default=S)
    common.add_argument("--lambda", dest="lam", type=float, default=S)
    common.add_argument("--eps", type=float, default=S)
    common.add_argument("--tol", type=float, default=S)
    common.add_argument("--max-newton", dest="max_newton", type=int, default=S)
    common.add_argument("--out", default=S)
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("-v", "--verbose", action="store_true")
    helps = {
        "solve": "solve (u*)^k det D^2u = F(x,u) on a grid",
        "solve-dirichlet": "sub-/supercritical or eigen Dirichlet problem for lam |u|^p",
        "flow": "run the parabolic flow and record J",
        "eigen": "eigenvalue and eigenfunction for p = n + k",
        "functional": "functional report of a field",
        "invariant": "scale-invariant integral over several recipes",
        "sobolev": "Sobolev lower bound over random recipes",
        "transport-check": "radial graph transform checks",
        "oracle": "1-D shooting reference solution",
        "convergence-study": "observed orders over a grid ladder",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=text) for name, text in helps.items()}
    subs["solve"].add_argument("--rhs", default=S, help="1, (-u)^p, (eps-u)^p or (1-s*u)^q")
    subs["solve"].add_argument("--s", type=float, default=S)
    subs["solve-dirichlet"].add_argument("--regime", choices=["auto", "sub", "super", "eigen"], default=S)
    subs["flow"].add_argument("--u0", default=S, help="initial recipe, e.g. quadratic(1)")
    subs["flow"].add_argument("--F", default=S, help="source, e.g. (eps-u)^p")
    subs["flow"].add_argument("--dt0", type=float, default=S)
    subs["flow"].add_argument("--tmax", type=float, default=S)
    subs["flow"].add_argument("--flow-tol", dest="flow_tol", type=float, default=S)
    for name in ("functional", "transport-check"):
        subs[name].add_argument("--field", default=S, help="field CSV written by another command")
        subs[name].add_argument("--recipe", default=S)
    subs["transport-check"].add_argument("--bins", type=int, default=S)
    subs["sobolev"].add_argument("--count", type=int, default=S)
    subs["oracle"].add_argument("--eigen", action="store_true", default=S)
    subs["convergence-study"].add_argument("--base", choices=["fixed-rhs", "invariant", "eigen"], default=S)
    subs["convergence-study"].add_argument("--ladder", default=S, help="comma-separated grid sizes")
    return parser


def parse_config(argv) -> tuple[RunConfig, bool]:
    """Merge defaults, the optional JSON config file and the flags (in that order)."""
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose", False)
    settings = {}
    path = ns.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                settings.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if "lambda" in settings:
            settings["lam"] = settings.pop("lambda")
    settings.update(ns)
    if isinstance(settings.get("ladder"), str):
        try:
            settings["ladder"] = [int(v) for v in settings["ladder"].split(",") if v]
        except ValueError:
            raise ConfigError(f"bad ladder {settings['ladder']!r}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(settings) - known
    if unknown:
        raise ConfigError(f"unknown settings: {sorted(unknown)}")
    return RunConfig(**settings), verbose


def output_dir(cfg: RunConfig) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get("MAGMA_OUT")
    return Path(root) / cfg.command if root else Path("magma-runs") / cfg.command


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class Run:
    """Artifact bookkeeping of one command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = output_dir(cfg)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []
        self.reason = "ok"

    def json(self, name: str, data) -> None:
        with open(self.dir / name, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        self.artifacts.append(name)

    def field(self, name: str, f: GridField) -> None:
        save_csv(f, self.dir / name)
        self.artifacts.append(name)

    def table(self, name: str, header, rows) -> None:
        with open(self.dir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.artifacts.append(name)

    def manifest(self, wall: float, code: int) -> None:
        data = {"config": asdict(self.cfg), "command": self.cfg.command, "exit_code": code,
                "termination": self.reason, "wall_time_s": wall, "artifacts": self.artifacts,
                "versions": {"magma": __version__, "python": platform.python_version(),
                             "numpy": np.__version__, "scipy": scipy.__version__}}
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)


def _params(cfg: RunConfig, dom: ConvexDomain, p=None) -> FunctionalParams:
    return FunctionalParams(dom.dim, cfg.k, cfg.p if p is None else p, cfg.lam)


def _load_field(cfg: RunConfig) -> GridField:
    if cfg.field:
        try:
            return load_csv(cfg.field)
        except OSError as exc:
            raise ConfigError(f"cannot read field {cfg.field}: {exc}") from None
    return make_test_field(cfg.domain_obj(), cfg.recipe, n=cfg.grid)


def cmd_solve(cfg: RunConfig, run: Run) -> dict:
    dom = cfg.domain_obj()
    F = parse_source(cfg.rhs, p=cfg.p if cfg.p is not None else 1.0, eps=cfg.eps, lam=cfg.lam,
                     s=cfg.s, q=cfg.p)
    sc = cfg.solve_config()
    if isinstance(F, Constant) and cfg.k == 0:
        res = solve_fixed_rhs(dom, F.c, sc)
    elif isinstance(F, Power) and F.degenerate:
        res = solve_degenerate(dom, FunctionalParams(dom.dim, cfg.k, F.p, F.lam), sc,
                               u0=make_test_field(dom, "quadratic(1)", grid=get_grid(dom, cfg.grid)))
    else:
        u0 = None if cfg.k == 0 else make_test_field(dom, "quadratic(1)", grid=get_grid(dom, cfg.grid))
        res = solve_semilinear(dom, FunctionalParams(dom.dim, cfg.k), F, sc, u0=u0)
    run.field("field.csv", res.u)
    out = {"source": F.describe(), "residual": res.residual, "iterations": res.iterations,
           "residual_history": res.history, "u_origin": res.u.origin_value()}
    if res.trace:
        out["eps_trace"] = res.trace
    return out


def cmd_solve_dirichlet(cfg: RunConfig, run: Run) -> dict:
    dom = cfg.domain_obj()
    regime = cfg.regime
    if regime == "auto":
        crit = dom.dim + cfg.k
        if cfg.p is None or math.isclose(cfg.p, crit):
            regime = "eigen"
        else:
            regime = "sub" if cfg.p < crit else "super"
    sc = cfg.solve_config()
    if regime == "eigen":
        res = solve_eigen(dom, FunctionalParams(dom.dim, cfg.k), sc)
        run.field("field.csv", res.eigenfunction)
        return {"regime": regime, **res.to_dict()}
    prm = _params(cfg, dom)
    res = solve_subcritical(dom, prm, sc) if regime == "sub" else solve_supercritical(dom, prm, sc)
    run.field("field.csv", res.u)
    if res.notes and regime == "sub":
        run.reason = "uniqueness-mismatch"
    return {"regime": regime, "residual": res.residual, "u_origin": res.u.origin_value(),
            "uniqueness_gap": res.uniqueness_gap, "J": res.J, "amplitude": res.amplitude,
            "eps_trace": res.trace, "notes": res.notes}


def cmd_flow(cfg: RunConfig, run: Run) -> dict:
    dom = cfg.domain_obj()
    u0 = make_test_field(dom, cfg.u0, n=cfg.grid)
    spec = cfg.F or "1"
    F = parse_source(spec, p=cfg.p if cfg.p is not None else 1.0, eps=cfg.eps, lam=cfg.lam)
    fc = FlowConfig(dt0=cfg.dt0, tmax=cfg.tmax, tol=cfg.flow_tol)
    st = flow_run(u0, F, FunctionalParams(dom.dim, cfg.k), fc)
    st.write_history(run.dir / "history.csv")
    run.artifacts.append("history.csv")
    run.field("field.csv", st.u)
    run.reason = st.reason
    return {"reason": st.reason, "t": st.t, "J": st.J, "residual": st.residual,
            "accepted": st.accepted, "rejected": st.rejected, "diagnostics": st.diagnostics,
            "source": F.describe()}


def cmd_eigen(cfg: RunConfig, run: Run) -> dict:
    dom = cfg.domain_obj()
    res = solve_eigen(dom, FunctionalParams(dom.dim, cfg.k), cfg.solve_config())
    run.field("eigenfunction.csv", res.eigenfunction)
    return res.to_dict()


def cmd_functional(cfg: RunConfig, run: Run) -> dict:
    u = _load_field(cfg)
    F = None if cfg.p is None else Power(p=cfg.p, lam=cfg.lam)
    return json.loads(report(u, FunctionalParams(u.dim, cfg.k), F).to_json())


def cmd_invariant(cfg: RunConfig, run: Run) -> dict:
    return invariant_table(cfg.domain_obj(), cfg.grid)


def invariant_table(dom: ConvexDomain, n: int) -> dict:
    grid = get_grid(dom, n)
    vals = {r: scale_invariant(make_test_field(dom, r, grid=grid)) for r in INVARIANT_RECIPES}
    pv = dom.polar_volume()
    arr = np.array(list(vals.values()))
    return {"scale_invariant": vals, "polar_volume": pv,
            "max_relative_spread": float((arr.max() - arr.min()) / pv),
            "max_relative_error": float(np.max(np.abs(arr - pv)) / pv)}


def random_recipes(count: int, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    return [f"random-convex({int(s)})" for s in rng.integers(0, 2 ** 31 - 1, size=count)]


def cmd_sobolev(cfg: RunConfig, run: Run) -> dict:
    dom = cfg.domain_obj()
    grid = get_grid(dom, cfg.grid)
    prm = FunctionalParams(dom.dim, cfg.k)
    rows = []
    for rec in random_recipes(cfg.count, cfg.seed):
        rep = sobolev_check(make_test_field(dom, rec, grid=grid), prm)
        rows.append((rec, rep.H, rep.bound, int(rep.holds)))
    run.table("sobolev.csv", ["recipe", "H", "bound", "holds"], rows)
    return {"count": len(rows), "all_hold": all(r[3] for r in rows),
            "min_margin": float(min(r[1] - r[2] for r in rows))}


def cmd_transport(cfg: RunConfig, run: Run) -> dict:
    u = _load_field(cfg)
    sample = radial_transform(u)
    out = {"duality": verify_duality(sample).to_dict()}
    res = None
    if cfg.p is not None:
        prm = FunctionalParams(u.dim, cfg.k, cfg.p, cfg.lam)
        res = second_boundary_residual(sample, prm)
        out["second_boundary_max_rel"] = float(res.max())
        out["pushforward"] = verify_pushforward(u, prm, bins=cfg.bins).to_dict()
    run.table("samples.csv", sample.header(), sample.to_rows(res))
    return out


def cmd_oracle(cfg: RunConfig, run: Run) -> dict:
    p = cfg.p if cfg.p is not None else 1.0 + cfg.k
    prob = ShootingProblem(k=cfg.k, p=p, lam=cfg.lam, eigen=bool(cfg.eigen),
                           bracket=(0.2, 50.0) if cfg.eigen else (1e-6, 50.0))
    res = shoot(prob)
    x, u = res.samples(201)
    run.table("samples.csv", ["x", "u"], zip(x, u))
    return {"m": res.m, "lambda": res.lam, "k": cfg.k, "p": p,
            "samples": [[float(a), float(b)] for a, b in zip(x[::20], u[::20])]}


def _orders(h, err):
    out = [None]
    for i in range(1, len(err)):
        if err[i] > 0 and err[i - 1] > 0:
            out.append(math.log(err[i - 1] / err[i]) / math.log(h[i - 1] / h[i]))
        else:
            out.append(None)
    return out


def exact_fixed_rhs(dom: ConvexDomain):
    """(f, u) with det D^2u = f and u = e^{|x|^2/2} - e^{1/2} on the unit ball or interval."""
    if dom.kind == "ball" and dom.params[0] == 1.0:
        return (lambda x: (1 + np.sum(x ** 2, 1)) * np.exp(np.sum(x ** 2, 1)),
                lambda x: np.exp(np.sum(x ** 2, 1) / 2) - np.exp(0.5))
    if dom.kind == "interval" and tuple(dom.params) == (-1.0, 1.0):
        return (lambda x: (1 + x[:, 0] ** 2) * np.exp(x[:, 0] ** 2 / 2),
                lambda x: np.exp(x[:, 0] ** 2 / 2) - np.exp(0.5))
    raise ConfigError("the fixed-rhs study needs ball:1 or interval:-1,1")


def convergence_rows(cfg: RunConfig, run: Run | None = None) -> list[dict]:
    """One row per ladder member: h, error metric and observed order."""
    dom = cfg.domain_obj()
    rows = []
    prev = None
    for n in cfg.ladder:
        h = get_grid(dom, n).h[0]
        try:
            if cfg.base == "fixed-rhs":
                f, exact = exact_fixed_rhs(dom)
                res = solve_fixed_rhs(dom, f, cfg.solve_config(n))
                value = float(np.max(np.abs(res.u.values - exact(res.u.points))))
                metric = value
            elif cfg.base == "invariant":
                value = invariant_table(dom, n)["max_relative_error"]
                metric = value
            else:
                value = solve_eigen(dom, FunctionalParams(dom.dim, cfg.k), cfg.solve_config(n)).lam
                metric = abs(value - prev) if prev is not None else float("nan")
                prev = value
        except MagmaError as exc:
            if run is not None:
                run.reason = f"ladder member N={n} failed: {exc}"
            break
        rows.append({"N": n, "h": h, "value": value, "error": metric})
        if run is not None:
            sub = run.dir / f"N{n}"
            sub.mkdir(exist_ok=True)
            with open(sub / "manifest.json", "w") as fh:
                json.dump(_jsonable({"config": asdict(cfg), "N": n, "value": value}), fh, indent=2,
                          sort_keys=True)
    errs = [r["error"] for r in rows]
    hs = [r["h"] for r in rows]
    for r, o in zip(rows, _orders(hs, errs)):
        r["order"] = o
    return rows


def cmd_convergence(cfg: RunConfig, run: Run) -> dict:
    rows = convergence_rows(cfg, run)
    run.table("convergence.csv", ["N", "h", "value", "error", "order"],
              [[r["N"], r["h"], r["value"], r["error"], "" if r["order"] is None else r["order"]]
               for r in rows])
    if len(rows) < len(cfg.ladder):
        raise SolverError(run.reason)
    return {"base": cfg.base, "rows": rows}


HANDLERS = {"solve": cmd_solve, "solve-dirichlet": cmd_solve_dirichlet, "flow": cmd_flow,
            "eigen": cmd_eigen, "functional": cmd_functional, "invariant": cmd_invariant,
            "sobolev": cmd_sobolev, "transport-check": cmd_transport, "oracle": cmd_oracle,
            "convergence-study": cmd_convergence}


def run(cfg: RunConfig) -> int:
    """Execute one command, write its artifacts and return the exit code."""
    t0 = time.perf_counter()
    r = Run(cfg)
    code = EXIT_OK
    try:
        result = HANDLERS[cfg.command](cfg, r)
        r.json("result.json", result)
        print(json.dumps(_jsonable(result), sort_keys=True))
    except SolverError as exc:
        code, r.reason = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
    except (ConfigError, ValueError) as exc:
        code, r.reason = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    if code:
        print(f"magma {cfg.command}: {r.reason}", file=sys.stderr)
    r.manifest(time.perf_counter() - t0, code)
    return code


def main(argv=None) -> int:
    try:
        cfg, verbose = parse_config(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        # argparse exits on --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"magma: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
