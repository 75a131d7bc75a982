"""Convex domains containing the origin, their support functions and polar bodies.

Supported kinds are ``interval`` (1-D), ``ball``, ``ellipse``, ``rectangle`` and
``polygon`` (2-D).  Every domain is an open bounded convex set with the origin
strictly inside.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, QuadratureError

KINDS = ("interval", "ball", "ellipse", "rectangle", "polygon")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class ConvexDomain:
    """Immutable description of a bounded open convex set Omega with 0 in Omega.

    Parameters are stored per kind in ``params``:

    * interval: ``(a, b)`` with ``a < 0 < b``
    * ball: ``(r,)``
    * ellipse / rectangle: ``(a, b)`` semi-axes / half-widths
    * polygon: ``()``; counterclockwise vertices in ``vertices``
    """

    kind: str
    params: tuple = ()
    vertices: tuple = field(default=(), compare=True)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "interval":
            if len(p) != 2 or not (p[0] < 0.0 < p[1]):
                raise ConfigError("interval needs a < 0 < b")
        elif self.kind == "ball":
            if len(p) != 1 or not p[0] > 0:
                raise ConfigError("ball needs a radius r > 0")
        elif self.kind in ("ellipse", "rectangle"):
            if len(p) != 2 or not (p[0] > 0 and p[1] > 0):
                raise ConfigError(f"{self.kind} needs two positive lengths")
        else:
            verts = tuple((float(x), float(y)) for x, y in self.vertices)
            object.__setattr__(self, "vertices", verts)
            _check_polygon(np.array(verts))
        if not all(math.isfinite(v) for v in p):
            raise ConfigError("domain parameters must be finite")

    # -- constructors -------------------------------------------------------
    @classmethod
    def interval(cls, a: float = -1.0, b: float = 1.0) -> "ConvexDomain":
        return cls("interval", (a, b))

    @classmethod
    def ball(cls, r: float = 1.0) -> "ConvexDomain":
        return cls("ball", (r,))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "ConvexDomain":
        return cls("ellipse", (a, b))

    @classmethod
    def rectangle(cls, a: float, b: float) -> "ConvexDomain":
        return cls("rectangle", (a, b))

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]]) -> "ConvexDomain":
        return cls("polygon", (), tuple(tuple(v) for v in vertices))

    @classmethod
    def from_descriptor(cls, desc) -> "ConvexDomain":
        """Build a domain from a JSON object, a JSON string or a shorthand.

        Shorthands look like ``ball:1``, ``interval:-1,1``, ``ellipse:1,0.5``,
        ``rectangle:1,2`` and ``polygon:1,0;0,1;-1,0;0,-1``.
        """
        if isinstance(desc, ConvexDomain):
            return desc
        if isinstance(desc, str):
            s = desc.strip()
            if s.startswith("{"):
                desc = json.loads(s)
            else:
                kind, _, rest = s.partition(":")
                kind = kind.strip()
                try:
                    if kind == "polygon":
                        verts = [tuple(float(c) for c in v.split(",")) for v in rest.split(";")]
                        return cls.polygon(verts)
                    vals = tuple(float(c) for c in rest.split(",")) if rest else ()
                except ValueError as exc:
                    raise ConfigError(f"bad domain shorthand {desc!r}") from exc
                if kind == "ball" and not vals:
                    vals = (1.0,)
                if kind == "interval" and not vals:
                    vals = (-1.0, 1.0)
                return cls(kind, vals)
        if not isinstance(desc, dict) or "kind" not in desc:
            raise ConfigError(f"bad domain descriptor {desc!r}")
        kind = desc["kind"]
        if "params" in desc and kind != "polygon":
            return cls(kind, tuple(desc["params"]))
        try:
            if kind == "interval":
                return cls.interval(desc.get("a", -1.0), desc.get("b", 1.0))
            if kind == "ball":
                return cls.ball(desc.get("r", 1.0))
            if kind in ("ellipse", "rectangle"):
                return cls(kind, (desc["a"], desc["b"]))
            if kind == "polygon":
                return cls.polygon(desc["vertices"])
        except KeyError as exc:
            raise ConfigError(f"domain descriptor missing {exc}") from exc
        raise ConfigError(f"unknown domain kind {kind!r}")

    def to_descriptor(self) -> dict:
        if self.kind == "interval":
            return {"kind": "interval", "a": self.params[0], "b": self.params[1]}
        if self.kind == "ball":
            return {"kind": "ball", "r": self.params[0]}
        if self.kind == "polygon":
            return {"kind": "polygon", "vertices": [list(v) for v in self.vertices]}
        return {"kind": self.kind, "a": self.params[0], "b": self.params[1]}

    # -- basic geometry -----------------------------------------------------
    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def strictly_convex(self) -> bool:
        return self.kind in ("interval", "ball", "ellipse")

    def scaled(self, c: float) -> "ConvexDomain":
        """The dilated domain c * Omega."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "polygon":
            return ConvexDomain.polygon([(c * x, c * y) for x, y in self.vertices])
        return ConvexDomain(self.kind, tuple(c * v for v in self.params))

    def bounding_box(self) -> np.ndarray:
        """Array of shape (dim, 2) with lower/upper bounds per axis."""
        p = self.params
        if self.kind == "interval":
            return np.array([[p[0], p[1]]])
        if self.kind == "ball":
            return np.array([[-p[0], p[0]], [-p[0], p[0]]])
        if self.kind in ("ellipse", "rectangle"):
            return np.array([[-p[0], p[0]], [-p[1], p[1]]])
        v = np.array(self.vertices)
        return np.stack([v.min(axis=0), v.max(axis=0)], axis=1)

    def _halfplanes(self):
        """Outward unit normals and offsets for polygon-like kinds."""
        if self.kind == "rectangle":
            a, b = self.params
            normals = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
            return normals, np.array([a, b, a, b])
        v = np.array(self.vertices)
        e = np.roll(v, -1, axis=0) - v
        normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return normals, np.einsum("ij,ij->i", normals, v)

    def contains(self, x) -> np.ndarray | bool:
        """True where ``x`` lies in the open set (boundary excluded).

        ``x`` is a point or an array of points with last axis of length dim
        (a scalar or 1-D array is accepted for intervals).
        """
        pts = np.asarray(x, dtype=float)
        if self.dim == 1:
            a, b = self.params
            t = pts[..., 0] if (pts.ndim >= 2 and pts.shape[-1] == 1) else pts
            res = (t > a) & (t < b)
            return bool(res) if np.ndim(res) == 0 else res
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        X, Y = pts[..., 0], pts[..., 1]
        if self.kind == "ball":
            res = X * X + Y * Y < self.params[0] ** 2
        elif self.kind == "ellipse":
            a, b = self.params
            res = (X / a) ** 2 + (Y / b) ** 2 < 1.0
        else:
            normals, offs = self._halfplanes()
            res = np.all(pts @ normals.T < offs, axis=-1)
        if scalar:
            return bool(res[0])
        return res

    def defining_function(self, x) -> np.ndarray:
        """Convex rho with rho = 0 on the boundary and rho(0) = -1.

        Only defined for the strictly convex kinds (interval, ball, ellipse).
        """
        pts = np.asarray(x, dtype=float)
        if self.kind == "interval":
            a, b = self.params
            t = pts[..., 0] if pts.ndim > 1 else pts
            return (t - a) * (t - b) / abs(a * b)
        if self.kind == "ball":
            r = self.params[0]
            return (pts[..., 0] ** 2 + pts[..., 1] ** 2) / r**2 - 1.0
        if self.kind == "ellipse":
            a, b = self.params
            return (pts[..., 0] / a) ** 2 + (pts[..., 1] / b) ** 2 - 1.0
        raise ConfigError(f"no smooth defining function for kind {self.kind!r}")

    def defining_hessian(self) -> np.ndarray:
        """Constant Hessian of the defining function."""
        if self.kind == "interval":
            a, b = self.params
            return np.array([[2.0 / abs(a * b)]])
        if self.kind == "ball":
            r = self.params[0]
            return np.diag([2.0 / r**2, 2.0 / r**2])
        if self.kind == "ellipse":
            a, b = self.params
            return np.diag([2.0 / a**2, 2.0 / b**2])
        raise ConfigError(f"no smooth defining function for kind {self.kind!r}")

    def ray_exit(self, x, d) -> np.ndarray:
        """Distance t > 0 with x + t*d on the boundary, for interior x and unit d.

        ``x`` has shape (m, dim) and ``d`` shape (dim,) or (m, dim).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
        if self.kind == "interval":
            a, b = self.params
            return np.where(d[:, 0] > 0, (b - x[:, 0]) / np.where(d[:, 0] > 0, d[:, 0], 1.0),
                            (a - x[:, 0]) / np.where(d[:, 0] < 0, d[:, 0], -1.0))
        if self.kind in ("ball", "ellipse"):
            if self.kind == "ball":
                sx = sy = self.params[0]
            else:
                sx, sy = self.params
            xs = x / np.array([sx, sy])
            ds = d / np.array([sx, sy])
            A = np.einsum("ij,ij->i", ds, ds)
            B = np.einsum("ij,ij->i", xs, ds)
            C = np.einsum("ij,ij->i", xs, xs) - 1.0
            disc = np.sqrt(np.maximum(B * B - A * C, 0.0))
            # -C >= 0 for interior points; this form avoids cancellation
            return np.where(B > 0, -C / (B + disc), (disc - B) / A)
        normals, offs = self._halfplanes()
        dn = d @ normals.T
        gap = offs[None, :] - x @ normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dn > 1e-300, gap / dn, np.inf)
        return t.min(axis=1)

    def radial(self, theta) -> np.ndarray:
        """Radial function: distance from 0 to the boundary in direction theta."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        return self.ray_exit(np.zeros_like(d), d)

    def support(self, theta) -> np.ndarray | float:
        """Support function h(theta) = sup_{y in Omega} <y, (cos theta, sin theta)>."""
        if self.dim != 2:
            raise ValueError("support function is only defined for 2-D domains")
        th = np.asarray(theta, dtype=float)
        c, s = np.cos(th), np.sin(th)
        if self.kind == "ball":
            val = np.full_like(c, self.params[0])
        elif self.kind == "ellipse":
            a, b = self.params
            val = np.sqrt((a * c) ** 2 + (b * s) ** 2)
        elif self.kind == "rectangle":
            a, b = self.params
            val = a * np.abs(c) + b * np.abs(s)
        else:
            v = np.array(self.vertices)
            val = np.max(np.multiply.outer(c, v[:, 0]) + np.multiply.outer(s, v[:, 1]), axis=-1)
        return float(val) if np.ndim(val) == 0 else val

    def polar_support(self, theta) -> np.ndarray:
        """Support function of the polar body, which is 1 / radial function."""
        return 1.0 / self.radial(theta)

    def polar_volume(self, panels: int = 4096, rtol: float = 1e-9) -> float:
        """Volume of the polar body {x : <x, y> <= 1 for all y in Omega}.

        In 2-D this is (1/2) * integral of h(theta)^-2 over the circle, computed
        by composite 5-point Gauss-Legendre on ``panels`` uniform panels (split
        at the support-function kinks for polygons) and checked against the
        half-resolution value.
        """
        if self.dim == 1:
            a, b = self.params
            return 1.0 / abs(a) + 1.0 / b
        breaks = self._support_kinks()
        fine = self._polar_quadrature(breaks, panels)
        coarse = self._polar_quadrature(breaks, panels // 2)
        if abs(fine - coarse) > rtol * abs(fine):
            raise QuadratureError(
                f"polar volume quadrature not converged: {fine!r} vs {coarse!r}")
        return fine

    def _support_kinks(self) -> np.ndarray:
        if self.kind in ("rectangle", "polygon"):
            normals, _ = self._halfplanes()
            ang = np.mod(np.arctan2(normals[:, 1], normals[:, 0]), 2 * np.pi)
            return np.unique(np.concatenate([[0.0, 2 * np.pi], ang]))
        return np.array([0.0, 2 * np.pi])

    def _polar_quadrature(self, breaks: np.ndarray, panels: int) -> float:
        total = 0.0
        span = breaks[-1] - breaks[0]
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            if hi - lo <= 0:
                continue
            npan = max(1, int(round(panels * (hi - lo) / span)))
            edges = np.linspace(lo, hi, npan + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            th = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
            w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
            total += float(np.sum(w * self.support(th) ** -2.0))
        return 0.5 * total

    def area(self) -> float:
        p = self.params
        if self.kind == "interval":
            return p[1] - p[0]
        if self.kind == "ball":
            return math.pi * p[0] ** 2
        if self.kind == "ellipse":
            return math.pi * p[0] * p[1]
        if self.kind == "rectangle":
            return 4.0 * p[0] * p[1]
        v = np.array(self.vertices)
        return 0.5 * float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    def diameter(self) -> float:
        p = self.params
        if self.kind == "interval":
            return p[1] - p[0]
        if self.kind == "ball":
            return 2.0 * p[0]
        if self.kind == "ellipse":
            return 2.0 * max(p)
        if self.kind == "rectangle":
            return 2.0 * math.hypot(p[0], p[1])
        v = np.array(self.vertices)
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    def boundary_distance(self, x) -> float:
        """Euclidean distance from an interior point to the boundary."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if not self.contains(x if self.dim == 2 else x[0]):
            raise ValueError(f"point {x.tolist()} is not interior to the domain")
        if self.kind == "interval":
            a, b = self.params
            return float(min(x[0] - a, b - x[0]))
        if self.kind == "ball":
            return float(self.params[0] - np.hypot(x[0], x[1]))
        if self.kind == "ellipse":
            return _ellipse_distance(self.params[0], self.params[1], x[0], x[1])
        normals, offs = self._halfplanes()
        return float(np.min(offs - normals @ x))


def _check_polygon(v: np.ndarray) -> None:
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
        raise ConfigError("polygon needs at least three 2-D vertices")
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross <= 0):
        raise ConfigError("polygon must be strictly convex and counterclockwise")
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    offs = np.einsum("ij,ij->i", normals, v)
    if np.any(offs <= 0):
        raise ConfigError("origin must lie strictly inside the polygon")


def _ellipse_distance(a: float, b: float, x: float, y: float) -> float:
    # distance from an interior point to the ellipse (x/a)^2 + (y/b)^2 = 1
    x, y = abs(x), abs(y)
    th = np.linspace(0.0, np.pi / 2, 721)
    d2 = (a * np.cos(th) - x) ** 2 + (b * np.sin(th) - y) ** 2
    i = int(np.argmin(d2))
    lo, hi = th[max(i - 1, 0)], th[min(i + 1, len(th) - 1)]
    # golden-section polish on the bracketing arc
    g = (math.sqrt(5) - 1) / 2
    f = lambda t: (a * math.cos(t) - x) ** 2 + (b * math.sin(t) - y) ** 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    for _ in range(80):
        if f(c) < f(d):
            hi = d
        else:
            lo = c
        c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    return math.sqrt(f(0.5 * (lo + hi)))
