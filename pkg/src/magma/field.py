"""Grid fields with zero boundary trace and their finite-difference calculus.

The central object is :class:`GridField`, a vector of values on the interior
nodes of a :class:`~magma.grid.Grid`.  Operators act on it through the sparse
Shortley-Weller matrices of the grid, so the zero Dirichlet trace enters every
stencil with the true distance to the boundary.
"""
from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass

import numpy as np

from .domain import ConvexDomain
from .errors import ConfigError
from .grid import Grid, get_grid


class GridField:
    """Values of a function vanishing on the boundary, stored on interior nodes.

    Parameters
    ----------
    grid : Grid
    values : array of shape ``(grid.m,)``
    """

    __array_priority__ = 100

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.m,):
            raise ValueError(f"expected {grid.m} values, got shape {values.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, func) -> "GridField":
        """Sample ``func(points)`` at the interior nodes; ``points`` is (m, dim)."""
        return cls(grid, np.asarray(func(grid.points), dtype=float).reshape(grid.m))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.m))

    # -- shortcuts ----------------------------------------------------------
    @property
    def domain(self) -> ConvexDomain:
        return self.grid.domain

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def h(self) -> tuple:
        return self.grid.h

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())

    def with_values(self, values) -> "GridField":
        return GridField(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.grid.m else 0.0

    def origin_value(self) -> float:
        return self.grid.origin_value(self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    # -- arithmetic ---------------------------------------------------------
    def _other(self, other):
        if isinstance(other, GridField):
            if other.grid is not self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridField(self.grid, self._other(other) - self.values)

    def __mul__(self, c):
        return GridField(self.grid, self.values * self._other(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return GridField(self.grid, self.values / self._other(c))

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def __repr__(self):
        return f"GridField({self.grid!r}, min={self.values.min():.6g})"


@dataclass
class StarField:
    """Nodal values of u* = <x, grad u> - u on the grid of ``u``."""

    grid: Grid
    values: np.ndarray

    def min(self) -> float:
        return float(self.values.min())

    def argmin_point(self) -> np.ndarray:
        return self.grid.points[int(np.argmin(self.values))]


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, (GridField, StarField)) else np.asarray(f, dtype=float)


# -- differential operators -------------------------------------------------
def gradient(f: GridField) -> np.ndarray:
    """Gradient at interior nodes, shape ``(m, dim)``.

    Central differences away from the boundary and non-uniform three-point
    differences (using the pinned zero at the boundary crossing) next to it.
    """
    return np.stack([D @ f.values for D in f.grid.D1], axis=1)


def hessian(f: GridField) -> np.ndarray:
    """Symmetric finite-difference Hessian, shape ``(m, dim, dim)``."""
    g = f.grid
    H = np.empty((g.m, g.dim, g.dim))
    for a in range(g.dim):
        H[:, a, a] = g.D2[a] @ f.values
    if g.dim == 2:
        H[:, 0, 1] = H[:, 1, 0] = g.Dxy @ f.values
    return H


def det_of(H: np.ndarray) -> np.ndarray:
    if H.shape[-1] == 1:
        return H[:, 0, 0].copy()
    return H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]


def hessian_det(f: GridField) -> np.ndarray:
    """det D^2 u at interior nodes (u'' in one dimension)."""
    return det_of(hessian(f))


def star_values(points: np.ndarray, grad: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", points, grad) - u


def star(f: GridField) -> StarField:
    """The function u* = <x, grad u(x)> - u(x) at interior nodes."""
    return StarField(f.grid, star_values(f.points, gradient(f), f.values))


def is_convex(f: GridField, strict: bool = True) -> bool:
    """Discrete convexity flag: every principal second difference is positive."""
    for D in f.grid.D2:
        d2 = D @ f.values
        if (strict and np.any(d2 <= 0)) or (not strict and np.any(d2 < 0)):
            return False
    return True


def integrate(f, weight=None, grid: Grid | None = None, vanishing: bool = False) -> float:
    """Cut-cell quadrature of ``f * weight`` over the domain.

    ``f`` may be a field or a plain array on the interior nodes (then ``grid``
    is required).  With ``vanishing=True`` only the clipped cells of interior
    nodes are used, which suits integrands that are zero on the boundary.
    """
    if grid is None:
        if not isinstance(f, (GridField, StarField)):
            raise ValueError("grid is required when integrating a plain array")
        grid = f.grid
    vals = np.broadcast_to(_vals(f), (grid.m,))
    if weight is not None:
        vals = vals * _vals(weight)
    w = grid.weights if vanishing else grid.weights_full
    return float(w @ vals)


# -- trial fields -----------------------------------------------------------
_RECIPE_RE = re.compile(r"^\s*([a-z\-_]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_recipe(recipe: str) -> tuple[str, list[float]]:
    m = _RECIPE_RE.match(recipe)
    if not m:
        raise ConfigError(f"cannot parse recipe {recipe!r}")
    name = m.group(1).replace("_", "-")
    args = [float(a) for a in m.group(2).split(",") if a.strip()] if m.group(2) else []
    return name, args


def _cosine_coordinate(domain: ConvexDomain, x: np.ndarray) -> np.ndarray:
    """A gauge-like coordinate s(x) in [0, 1), s = 1 exactly on the boundary."""
    if domain.kind == "interval":
        a, b = domain.params
        return np.abs((2 * x[:, 0] - (a + b)) / (b - a))
    return np.sqrt(np.maximum(domain.defining_function(x) + 1.0, 0.0))


def recipe_values(domain: ConvexDomain, recipe: str, x: np.ndarray) -> np.ndarray:
    """Evaluate a named trial function of the zero-trace convex cone at ``x``.

    Recipes
    -------
    quadratic(c)
        ``c * rho / 2`` with ``rho`` the normalized quadratic defining function
        (``rho(0) = -1``), e.g. ``(|x|^2 - 1)/2`` on the unit disk.
    cosine-bump(c)
        ``-c cos(pi s / 2)`` with ``s`` the gauge coordinate of the domain.
    exp-bump(c)
        ``(exp(c rho) - 1)/c``, e.g. ``exp(x^2 - 1) - 1`` on (-1, 1).
    random-convex(seed)
        random positive mix of the above plus a tilted term ``rho (1 + <b,x>)``.
    """
    name, args = parse_recipe(recipe)
    if domain.kind in ("rectangle", "polygon"):
        raise ConfigError("trial recipes need a smooth domain (interval, ball, ellipse)")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if domain.dim == 1 and x.shape[-1] != 1:
        x = x.reshape(-1, 1)
    rho = domain.defining_function(x if domain.dim == 2 else x[:, 0])
    if name == "quadratic":
        c = args[0] if args else 1.0
        if c <= 0:
            raise ConfigError("quadratic(c) needs c > 0")
        return 0.5 * c * rho
    if name == "cosine-bump":
        c = args[0] if args else 1.0
        if c <= 0:
            raise ConfigError("cosine-bump(c) needs c > 0")
        return -c * np.cos(0.5 * np.pi * np.minimum(_cosine_coordinate(domain, x), 1.0))
    if name == "exp-bump":
        c = args[0] if args else 1.0
        if c <= 0:
            raise ConfigError("exp-bump(c) needs c > 0")
        return np.expm1(c * rho) / c
    if name == "random-convex":
        seed = int(args[0]) if args else 0
        return _random_convex(domain, x, rho, seed)
    raise ConfigError(f"unknown recipe {name!r}")


def _random_convex(domain, x, rho, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, size=4)
    c = rng.uniform(0.3, 2.0)
    # the tilt is kept small relative to the domain so the product stays convex
    scale = domain.diameter() / 2
    b = rng.uniform(-1.0, 1.0, size=domain.dim)
    b *= rng.uniform(0.0, 0.3) / (scale * max(np.linalg.norm(b), 1e-12))
    amp = rng.uniform(0.3, 2.0)
    s = _cosine_coordinate(domain, x)
    u = (w[0] * 0.5 * rho
         + w[1] * np.expm1(c * rho) / c
         + w[2] * 0.5 * rho * (1.0 + x @ b)
         - w[3] * np.cos(0.5 * np.pi * np.minimum(s, 1.0)))
    return amp * u / w.sum()


def make_test_field(domain, recipe: str = "quadratic(1)", n: int = 129,
                    grid: Grid | None = None, check: bool = True) -> GridField:
    """Build a discretely convex trial field of the zero-trace cone.

    Raises
    ------
    ConfigError
        if the recipe is unknown or the sampled field is not discretely convex.
    """
    domain = ConvexDomain.from_descriptor(domain)
    grid = grid if grid is not None else get_grid(domain, n)
    f = GridField(grid, recipe_values(domain, recipe, grid.points))
    if check and not is_convex(f):
        raise ConfigError(f"recipe {recipe!r} is not discretely convex on this grid")
    return f


# -- CSV round trip ---------------------------------------------------------
def save_csv(f: GridField, path_or_buf) -> None:
    """Write ``# {json header}`` followed by rows ``i,j,x,y,u``."""
    g = f.grid
    header = {"domain": g.domain.to_descriptor(), "n": g.n, "h": list(g.h)}
    ij = g.ij if g.dim == 2 else np.hstack([g.ij, np.zeros((g.m, 1), dtype=int)])
    xy = g.points if g.dim == 2 else np.hstack([g.points, np.zeros((g.m, 1))])
    lines = ["# " + json.dumps(header), "i,j,x,y,u"]
    lines += [f"{i},{j},{x!r},{y!r},{u!r}" for (i, j), (x, y), u in
              zip(ij.tolist(), xy.tolist(), f.values.tolist())]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def load_csv(path_or_buf) -> GridField:
    """Inverse of :func:`save_csv`; values round-trip bit-exactly."""
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf) as fh:
            text = fh.read()
    buf = io.StringIO(text)
    first = buf.readline()
    if not first.startswith("#"):
        raise ConfigError("field CSV lacks its JSON header line")
    header = json.loads(first[1:])
    domain = ConvexDomain.from_descriptor(header["domain"])
    grid = get_grid(domain, int(header["n"]))
    buf.readline()
    values = np.zeros(grid.m)
    seen = np.zeros(grid.m, dtype=bool)
    for line in buf:
        if not line.strip():
            continue
        i, j, _, _, u = line.split(",")
        idx = grid.index[int(i)] if grid.dim == 1 else grid.index[int(i), int(j)]
        if idx < 0:
            raise ConfigError(f"node ({i},{j}) is not interior on the rebuilt grid")
        values[idx] = float(u)
        seen[idx] = True
    if not seen.all():
        raise ConfigError("field CSV does not cover every interior node")
    return GridField(grid, values)
