"""Uniform grids clipped to a convex domain, with Shortley-Weller closure.

A :class:`Grid` stores the interior nodes of a tensor grid laid over the
bounding box of the domain.  Field values live on interior nodes only; the
boundary trace is identically zero, so every finite-difference operator is a
sparse linear map from interior values to interior values.  Near the boundary
the stencils use the true distance to the point where the grid line crosses
the boundary (Shortley-Weller).
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .domain import ConvexDomain

# nodes closer than this fraction of h to the boundary (along a grid line)
# are treated as boundary nodes
SNAP_FRACTION = 1e-8

_QUADRANTS = ((1, 1), (-1, -1), (1, -1), (-1, 1))


class Grid:
    """Interior nodes of an ``n``-point-per-axis grid over ``domain``.

    Attributes
    ----------
    points : (m, dim) array of interior node coordinates
    ij : (m, dim) integer array of grid indices
    h : per-axis spacing
    spacing : dict mapping (axis, side) to the (m,) arrays of distances to the
        neighbouring node or boundary crossing (side is -1 or +1)
    """

    def __init__(self, domain: ConvexDomain, n: int, subgrid: int = 4):
        if n < 5:
            raise ValueError("grid needs at least 5 points per axis")
        self.domain = domain
        self.n = int(n)
        self.dim = domain.dim
        self.subgrid = int(subgrid)
        box = domain.bounding_box()
        self.axes = [np.linspace(lo, hi, self.n) for lo, hi in box]
        self.h = tuple(float(ax[1] - ax[0]) for ax in self.axes)
        self.shape = (self.n,) * self.dim
        if self.dim == 1:
            full_pts = self.axes[0][:, None]
        else:
            X, Y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
            full_pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        self._full_points = full_pts
        inside = np.asarray(domain.contains(full_pts if self.dim == 2 else full_pts[:, 0]))
        mask = inside.reshape(self.shape)
        while True:
            self._set_mask(mask)
            close = np.zeros(self.m, dtype=bool)
            for (axis, side), dist in self.spacing.items():
                close |= dist < SNAP_FRACTION * self.h[axis]
            if not close.any():
                break
            mask = mask.copy()
            mask[tuple(self.ij[close].T)] = False
        self._build_operators()

    # -- topology -----------------------------------------------------------
    def _set_mask(self, mask: np.ndarray) -> None:
        self.mask = mask
        self.index = -np.ones(self.shape, dtype=np.int64)
        self.ij = np.argwhere(mask)
        self.m = len(self.ij)
        self.index[tuple(self.ij.T)] = np.arange(self.m)
        self.points = np.stack([self.axes[a][self.ij[:, a]] for a in range(self.dim)], axis=1)
        self.neighbor = {}
        self.spacing = {}
        crossings = []
        for axis in range(self.dim):
            for side in (-1, 1):
                nb = self._shifted_index(axis, side)
                dist = np.full(self.m, self.h[axis])
                out = nb < 0
                if out.any():
                    d = np.zeros(self.dim)
                    d[axis] = side
                    t = self.domain.ray_exit(self.points[out], d)
                    dist[out] = np.minimum(t, self.h[axis])
                    cross = self.points[out].copy()
                    cross[:, axis] += side * dist[out]
                    crossings.append(cross)
                self.neighbor[axis, side] = nb
                self.spacing[axis, side] = dist
        self.boundary_points = (np.unique(np.concatenate(crossings), axis=0)
                                if crossings else np.zeros((0, self.dim)))

    def _shifted_index(self, axis: int, side: int, other: int = 0) -> np.ndarray:
        """Interior index of the node offset by ``side`` along ``axis`` (and
        ``other`` along the second axis in 2-D); -1 if not interior."""
        tgt = self.ij.copy()
        tgt[:, axis] += side
        if other:
            tgt[:, 1 - axis] += other
        ok = np.all((tgt >= 0) & (tgt < self.n), axis=1)
        res = -np.ones(self.m, dtype=np.int64)
        res[ok] = self.index[tuple(tgt[ok].T)]
        return res

    # -- operators ----------------------------------------------------------
    def _build_operators(self) -> None:
        m = self.m
        self.D1 = []
        self.D2 = []
        rows = np.arange(m)
        for axis in range(self.dim):
            hl = self.spacing[axis, -1]
            hr = self.spacing[axis, 1]
            nl = self.neighbor[axis, -1]
            nr = self.neighbor[axis, 1]
            s = hl + hr
            # three-point non-uniform formulas, exact on quadratics
            d2 = [(rows, rows, -2.0 / (hl * hr)),
                  (rows, nl, 2.0 / (hl * s)),
                  (rows, nr, 2.0 / (hr * s))]
            d1 = [(rows, rows, (hr - hl) / (hl * hr)),
                  (rows, nl, -hr / (hl * s)),
                  (rows, nr, hl / (hr * s))]
            self.D2.append(_assemble(d2, m))
            self.D1.append(_assemble(d1, m))
        self.Dxy = None
        self.cross_order = None
        if self.dim == 2:
            self._build_cross()

    def _build_cross(self) -> None:
        m = self.m
        hx, hy = self.h
        rows = np.arange(m)
        valid = {}
        parts = {}
        for sx, sy in _QUADRANTS:
            a = self._shifted_index(0, sx)
            b = self._shifted_index(1, sy)
            c = self._shifted_index(0, sx, sy)
            valid[sx, sy] = (a >= 0) & (b >= 0) & (c >= 0)
            f = sx * sy / (hx * hy)
            parts[sx, sy] = (a, b, c, f)
        all4 = np.all([valid[q] for q in _QUADRANTS], axis=0)
        pair1 = valid[1, 1] & valid[-1, -1]
        pair2 = valid[1, -1] & valid[-1, 1]
        use = {q: np.zeros(m, dtype=bool) for q in _QUADRANTS}
        order = np.zeros(m, dtype=np.int8)
        for q in _QUADRANTS:
            use[q] |= all4
        order[all4] = 2
        sel = ~all4 & pair1
        use[1, 1] |= sel
        use[-1, -1] |= sel
        order[sel] = 2
        sel = ~all4 & ~pair1 & pair2
        use[1, -1] |= sel
        use[-1, 1] |= sel
        order[sel] = 2
        rest = order == 0
        for q in _QUADRANTS:
            use[q] |= rest & valid[q]
        order[rest & np.any([valid[q] for q in _QUADRANTS], axis=0)] = 1
        count = np.sum([use[q] for q in _QUADRANTS], axis=0).astype(float)
        entries = []
        for q in _QUADRANTS:
            a, b, c, f = parts[q]
            sel = use[q]
            wgt = np.zeros(m)
            wgt[sel] = f / count[sel]
            entries += [(rows, rows, wgt), (rows, a, -wgt), (rows, b, -wgt), (rows, c, wgt)]
        D = _assemble(entries, m).tolil()
        missing = np.flatnonzero(order == 0)
        if len(missing):
            # borrow the stencil of neighbouring nodes that have one
            D = D.tocsr()
            extra = sp.lil_matrix((m, m))
            for p in missing:
                donors = [self.neighbor[ax, sd][p] for ax in range(2) for sd in (-1, 1)]
                donors = [d for d in donors if d >= 0 and order[d] > 0]
                if not donors:
                    continue
                row = sum(D.getrow(d) for d in donors) / len(donors)
                extra[p] = row
            D = (D + extra.tocsr()).tocsr()
        self.Dxy = D.tocsr()
        self.cross_order = order

    @property
    def cross_fallback(self) -> np.ndarray:
        """Nodes where the centred four-point cross stencil was not available."""
        if self.dim == 1:
            return np.zeros(self.m, dtype=bool)
        full = np.ones(self.m, dtype=bool)
        for sx, sy in _QUADRANTS:
            full &= (self._shifted_index(0, sx) >= 0) & (self._shifted_index(1, sy) >= 0) \
                & (self._shifted_index(0, sx, sy) >= 0)
        return ~full

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return sum(self.D2[1:], self.D2[0]).tocsr()

    # -- quadrature ---------------------------------------------------------
    @cached_property
    def _cell_geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Inside fraction and centroid of the clipped dual cell of every full-grid node."""
        dom = self.domain
        pts = self._full_points
        if self.dim == 1:
            a, b = dom.params
            h = self.h[0]
            lo = np.maximum(pts[:, 0] - h / 2, a)
            hi = np.minimum(pts[:, 0] + h / 2, b)
            frac = np.clip(hi - lo, 0.0, None) / h
            return frac, (0.5 * (lo + hi))[:, None]
        hx, hy = self.h
        corners = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]]) * 0.5 * np.array([hx, hy])
        full_in = np.ones(len(pts), dtype=bool)
        for c in corners:
            full_in &= dom.contains(pts + c)
        frac = full_in.astype(float)
        centroid = pts.copy()
        todo = np.flatnonzero(~full_in)
        k = self.subgrid
        off = (np.arange(k) + 0.5) / k - 0.5
        ox, oy = np.meshgrid(off * hx, off * hy, indexing="ij")
        sub = np.stack([ox.ravel(), oy.ravel()], axis=1)
        for start in range(0, len(todo), 4096):
            chunk = todo[start:start + 4096]
            test = pts[chunk][:, None, :] + sub[None, :, :]
            inside = dom.contains(test.reshape(-1, 2)).reshape(len(chunk), -1)
            cnt = inside.sum(axis=1)
            frac[chunk] = cnt / inside.shape[1]
            hit = cnt > 0
            centroid[chunk[hit]] = (np.einsum("cs,csd->cd", inside, test)[hit]
                                    / cnt[hit, None])
        return frac, centroid

    @property
    def cell_fraction(self) -> np.ndarray:
        """Fraction of each full-grid dual cell that lies inside the domain."""
        return self._cell_geometry[0]

    @cached_property
    def weights(self) -> np.ndarray:
        """Dual-cell areas (clipped to the domain) of the interior nodes.

        Suited to integrands that vanish on the boundary: the thin strip of
        the domain covered only by cells of non-interior nodes is dropped.
        """
        cell = np.prod(self.h)
        frac = self.cell_fraction.reshape(self.shape)
        return frac[self.mask] * cell

    @cached_property
    def weights_full(self) -> np.ndarray:
        """Weights whose sum is the area of the domain.

        The clipped cell of a non-interior node is integrated by extrapolating
        linearly from the two nearest interior nodes along each grid line that
        reaches it (constant extension where only one node is available).
        """
        w = self.weights.copy()
        cell = np.prod(self.h)
        frac, centroid = self._cell_geometry
        frac = frac.reshape(self.shape)
        centroid = centroid.reshape(self.shape + (self.dim,))
        orphan = np.argwhere((~self.mask) & (frac > 0))
        eye = np.eye(self.dim, dtype=int)
        axis_offsets = [(a, s * eye[a]) for a in range(self.dim) for s in (1, -1)]
        diag = [np.array(o) for o in ((1, 1), (1, -1), (-1, 1), (-1, -1))] if self.dim == 2 else []

        def interior(t):
            return bool(np.all((t >= 0) & (t < self.n)) and self.mask[tuple(t)])

        for node in orphan:
            area = frac[tuple(node)] * cell
            c = centroid[tuple(node)]
            lines = [(a, o) for a, o in axis_offsets if interior(node + o)]
            if lines:
                share = area / len(lines)
                for a, o in lines:
                    p1 = node + o
                    p2 = p1 + o
                    i1 = self.index[tuple(p1)]
                    if interior(p2):
                        t = abs(self.axes[a][p1[a]] - c[a]) / self.h[a]
                        w[i1] += share * (1.0 + t)
                        w[self.index[tuple(p2)]] -= share * t
                    else:
                        w[i1] += share
                continue
            recv = [self.index[tuple(node + o)] for o in diag if interior(node + o)]
            if not recv:
                x = np.array([self.axes[a][node[a]] for a in range(self.dim)])
                recv = [int(np.argmin(((self.points - x) ** 2).sum(axis=1)))]
            w[recv] += area / len(recv)
        return w

    # -- helpers ------------------------------------------------------------
    def to_full(self, values: np.ndarray) -> np.ndarray:
        """Scatter interior values into a full-grid array, zero elsewhere."""
        out = np.zeros(self.shape)
        out[self.mask] = values
        return out

    def origin_value(self, values: np.ndarray) -> float:
        """Value of the zero-trace field at the origin (multilinear interpolation)."""
        full = self.to_full(values)
        lo_idx = []
        frac = []
        for a in range(self.dim):
            ax = self.axes[a]
            i = int(np.clip(np.searchsorted(ax, 0.0) - 1, 0, self.n - 2))
            lo_idx.append(i)
            frac.append((0.0 - ax[i]) / (ax[i + 1] - ax[i]))
        if self.dim == 1:
            i, = lo_idx
            t, = frac
            return float((1 - t) * full[i] + t * full[i + 1])
        (i, j), (s, t) = lo_idx, frac
        return float((1 - s) * (1 - t) * full[i, j] + s * (1 - t) * full[i + 1, j]
                     + (1 - s) * t * full[i, j + 1] + s * t * full[i + 1, j + 1])

    def __repr__(self) -> str:
        return f"Grid({self.domain.kind}, n={self.n}, interior={self.m})"


def _assemble(entries, m: int) -> sp.csr_matrix:
    r = np.concatenate([e[0] for e in entries])
    c = np.concatenate([e[1] for e in entries])
    v = np.concatenate([np.broadcast_to(e[2], e[0].shape) for e in entries])
    keep = (c >= 0) & (v != 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(m, m))


_GRID_CACHE: dict = {}


def get_grid(domain: ConvexDomain, n: int) -> Grid:
    """Grid for (domain, n), memoised since construction dominates small runs."""
    key = (domain, int(n))
    g = _GRID_CACHE.get(key)
    if g is None:
        if len(_GRID_CACHE) > 32:
            _GRID_CACHE.clear()
        g = _GRID_CACHE[key] = Grid(domain, n)
    return g
