"""Ambient, inner and Mazurkiewicz distances on a grid domain.

Metric computations use 8-connectivity with edge lengths ``h`` and
``sqrt(2) h`` (octile paths).  Distances are measured between cell centers.

The Mazurkiewicz distance (least diameter of a connected set joining two
points) is bracketed rather than computed exactly:

* ``lo`` is the least ``tau`` for which ``x`` and ``y`` are joined inside
  ``mask & B(x, tau) & B(y, tau)``.  Every connected set of diameter ``D``
  containing both points lies in that intersection with ``tau = D``, so
  ``lo`` never exceeds the true grid value.
* ``hi`` is the diameter of an explicit connected witness, so it never
  falls below it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .domain import (
    _STRUCT4,
    _STRUCT8,
    CellIndex,
    DomainError,
    GridDomain,
    cells_to_mask,
)

_HALF_OFFSETS8 = ((1, 0), (0, 1), (1, 1), (1, -1))
_EPS = 1e-12


@dataclass(frozen=True)
class DistanceField:
    source: tuple
    values: np.ndarray
    metric_kind: str
    h: float
    origin: tuple[float, float]

    def __getitem__(self, c: CellIndex) -> float:
        return float(self.values[c[0], c[1]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for i, j in np.argwhere(np.isfinite(self.values)):
            w.writerow([repr(self.origin[0] + i * self.h), repr(self.origin[1] + j * self.h),
                        repr(float(self.values[i, j]))])
        return buf.getvalue()


@dataclass(frozen=True)
class MazBracket:
    lo: float
    hi: float
    witness: frozenset

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "witness_size": len(self.witness)}


def grid_graph(mask: np.ndarray, h: float, connectivity: int = 8):
    """Sparse symmetric adjacency of the true cells of ``mask``.

    Returns ``(graph, ids)`` where ``ids`` maps lattice index to node id.
    """
    ids = np.full(mask.shape, -1, dtype=np.int64)
    n = int(mask.sum())
    ids[mask] = np.arange(n)
    rows, cols, wts = [], [], []
    offs = _HALF_OFFSETS8 if connectivity == 8 else _HALF_OFFSETS8[:2]
    nx, ny = mask.shape
    for di, dj in offs:
        i0, i1 = 0, nx - di
        j0, j1 = max(0, -dj), ny - max(0, dj)
        a = ids[i0:i1, j0:j1]
        b = ids[i0 + di:i1 + di, j0 + dj:j1 + dj]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
        wts.append(np.full(int(ok.sum()), h * math.hypot(di, dj)))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    g = csr_matrix((np.concatenate([w, w]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(n, n))
    return g, ids


@lru_cache(maxsize=16)
def _domain_graph(dom: GridDomain):
    return grid_graph(dom.mask, dom.h, 8)


def _require_cell(dom: GridDomain, c: CellIndex):
    if not dom.is_inside(c):
        raise DomainError(f"cell {tuple(c)} is not in the domain")


def ambient_distance(dom: GridDomain, x: CellIndex, y: CellIndex) -> float:
    return dom.h * math.hypot(x[0] - y[0], x[1] - y[1])


def inner_distance_field(dom: GridDomain, source: CellIndex) -> DistanceField:
    """Single-source octile shortest-path lengths inside the mask."""
    _require_cell(dom, source)
    g, ids = _domain_graph(dom)
    dist = dijkstra(g, directed=False, indices=int(ids[source]))
    values = np.full(dom.shape, np.inf)
    values[dom.mask] = dist
    return DistanceField(tuple(source), values, "inner", dom.h, dom.origin)


def inner_distance(dom: GridDomain, x: CellIndex, y: CellIndex) -> float:
    """Octile path length between two cells (``inf`` across components)."""
    _require_cell(dom, x)
    _require_cell(dom, y)
    if tuple(x) == tuple(y):
        return 0.0
    return inner_distance_field(dom, x)[y]


def shortest_path(dom: GridDomain, x: CellIndex, y: CellIndex) -> list[CellIndex]:
    g, ids = _domain_graph(dom)
    return _path(g, ids, x, y)


def _path(g, ids, x, y) -> list[CellIndex]:
    src, dst = int(ids[x]), int(ids[y])
    dist, pred = dijkstra(g, directed=False, indices=src, return_predecessors=True)
    if not np.isfinite(dist[dst]):
        return []
    cells = np.argwhere(ids >= 0)
    out = [dst]
    while out[-1] != src:
        out.append(int(pred[out[-1]]))
    return [tuple(int(t) for t in cells[k]) for k in reversed(out)]


def diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance of a point array."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 64:
        from scipy.spatial import ConvexHull, QhullError

        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:  # collinear points
            pass
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _cells_diameter(cells, h) -> float:
    return h * diameter(np.array(list(cells), dtype=float))


class _PairRegion:
    """Lattice crop around a pair of cells with the ball-intersection key."""

    def __init__(self, dom: GridDomain, x: CellIndex, y: CellIndex, radius: float):
        h = dom.h
        rc = int(math.ceil(radius / h + 1e-9)) + 1
        self.i0 = max(0, min(x[0], y[0]) - rc)
        self.j0 = max(0, min(x[1], y[1]) - rc)
        i1 = min(dom.nx, max(x[0], y[0]) + rc + 1)
        j1 = min(dom.ny, max(x[1], y[1]) + rc + 1)
        self.mask = np.asarray(dom.mask[self.i0:i1, self.j0:j1])
        I, J = np.meshgrid(np.arange(self.i0, i1), np.arange(self.j0, j1), indexing="ij")
        dx = h * np.hypot(I - x[0], J - x[1])
        dy = h * np.hypot(I - y[0], J - y[1])
        self.key = np.maximum(dx, dy)
        self.x = (x[0] - self.i0, x[1] - self.j0)
        self.y = (y[0] - self.i0, y[1] - self.j0)
        self.h = h

    def connected(self, tau: float) -> bool:
        sub = self.mask & (self.key <= tau + _EPS)
        if not (sub[self.x] and sub[self.y]):
            return False
        lab, _ = ndimage.label(sub, structure=_STRUCT8)
        return lab[self.x] == lab[self.y]

    def connected_below(self, tau: float) -> bool:
        """Connectivity in the open intersection ``key < tau``."""
        sub = self.mask & (self.key < tau - _EPS)
        if not (sub[self.x] and sub[self.y]):
            return False
        lab, _ = ndimage.label(sub, structure=_STRUCT8)
        return lab[self.x] == lab[self.y]

    def threshold(self, tau_max: float) -> float:
        """Least attained key value at which x and y become connected.

        Candidate radii are the key values actually attained on the crop,
        so bisection over them is exact.
        """
        cand = np.unique(self.key[self.mask & (self.key <= tau_max + _EPS)])
        lo_i, hi_i = 0, len(cand) - 1
        if not self.connected(cand[hi_i]):
            return math.inf
        # invariant: connected at cand[hi_i]; disconnected below cand[lo_i]
        while lo_i < hi_i:
            mid = (lo_i + hi_i) // 2
            if self.connected(cand[mid]):
                hi_i = mid
            else:
                lo_i = mid + 1
        return float(cand[lo_i])

    def path_within(self, tau: float) -> list[CellIndex]:
        sub = self.mask & (self.key <= tau + _EPS)
        g, ids = grid_graph(sub, self.h, 8)
        if ids[self.x] < 0 or ids[self.y] < 0:
            return []
        p = _path(g, ids, self.x, self.y)
        return [(i + self.i0, j + self.j0) for i, j in p]


def _maz_lo(dom: GridDomain, x: CellIndex, y: CellIndex, cap: float = math.inf) -> float:
    """Bracket lower bound; returns ``cap`` when the bound is at least ``cap``."""
    if tuple(x) == tuple(y):
        return 0.0
    d = ambient_distance(dom, x, y)
    if d >= cap:
        return cap
    radius = cap if math.isfinite(cap) else _upper_radius(dom, x, y)
    if not math.isfinite(radius):
        return math.inf
    reg = _PairRegion(dom, x, y, radius)
    if math.isfinite(cap) and not reg.connected_below(cap):
        return cap
    return reg.threshold(radius)


def _upper_radius(dom, x, y) -> float:
    path = shortest_path(dom, x, y)
    if not path:
        return math.inf
    p = np.array(path, dtype=float)
    return dom.h * float(np.maximum(np.hypot(p[:, 0] - x[0], p[:, 1] - x[1]),
                                    np.hypot(p[:, 0] - y[0], p[:, 1] - y[1])).max())


def mazurkiewicz_distance(dom: GridDomain, x: CellIndex, y: CellIndex, tol: float | None = None,
                          max_witness_steps: int = 24) -> MazBracket:
    """Certified bracket ``lo <= d_M <= hi`` with a connected witness set."""
    _require_cell(dom, x)
    _require_cell(dom, y)
    if tol is None:
        tol = dom.h / 2
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    x, y = tuple(x), tuple(y)
    if x == y:
        return MazBracket(0.0, 0.0, frozenset([x]))
    inner_path = shortest_path(dom, x, y)
    if not inner_path:
        return MazBracket(math.inf, math.inf, frozenset())
    p = np.array(inner_path, dtype=float)
    tau_up = dom.h * float(np.maximum(np.hypot(p[:, 0] - x[0], p[:, 1] - x[1]),
                                      np.hypot(p[:, 0] - y[0], p[:, 1] - y[1])).max())
    reg = _PairRegion(dom, x, y, tau_up)
    lo = reg.threshold(tau_up)
    best_cells = inner_path
    best = _cells_diameter(inner_path, dom.h)
    tau = lo
    step = tol
    for _ in range(max_witness_steps):
        if tau >= best - _EPS:
            break
        cand = reg.path_within(tau)
        if cand:
            dcand = _cells_diameter(cand, dom.h)
            if dcand < best - _EPS:
                best, best_cells = dcand, cand
        tau += step
    return MazBracket(float(lo), float(best), frozenset(best_cells))


def _cell_array(cells: Iterable[CellIndex]) -> np.ndarray:
    return np.array(sorted(set(map(tuple, cells))), dtype=np.int64).reshape(-1, 2)


def maz_separation(dom: GridDomain, A: Iterable[CellIndex], B: Iterable[CellIndex]) -> float:
    """Least bracket lower bound between two cell sets.

    Returns 0 when the sets share a cell or are 4-adjacent.
    """
    a = _cell_array(A)
    b = _cell_array(B)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("separation of an empty set")
    ma = cells_to_mask(dom, map(tuple, a))
    mb = cells_to_mask(dom, map(tuple, b))
    if (ndimage.binary_dilation(ma, structure=_STRUCT4) & mb).any():
        return 0.0
    diff = a[:, None, :] - b[None, :, :]
    d = dom.h * np.hypot(diff[..., 0], diff[..., 1])
    order = np.argsort(d, axis=None, kind="stable")
    best = math.inf
    for k in order:
        ia, ib = np.unravel_index(k, d.shape)
        if d[ia, ib] >= best:
            break
        lo = _maz_lo(dom, tuple(a[ia]), tuple(b[ib]), cap=best)
        best = min(best, lo)
    return float(best)


def _crop(dom: GridDomain, c: CellIndex, rc: int):
    i0, j0 = max(0, c[0] - rc), max(0, c[1] - rc)
    i1, j1 = min(dom.nx, c[0] + rc + 1), min(dom.ny, c[1] + rc + 1)
    I, J = np.ogrid[i0:i1, j0:j1]
    d = dom.h * np.sqrt((I - c[0]) ** 2 + (J - c[1]) ** 2)
    return (slice(i0, i1), slice(j0, j1)), (c[0] - i0, c[1] - j0), (i0, j0), d


def maz_neighborhood(dom: GridDomain, A: Iterable[CellIndex], r: float) -> set[CellIndex]:
    """Domain cells whose bracket lower bound to ``A`` is below ``r``.

    A cell ``c`` qualifies when some ``a`` in ``A`` is joined to it inside
    ``mask & B(a, r) & B(c, r)`` (open balls).  Two quick tests avoid most
    pairwise checks: a source in the component of ``c`` inside ``B(c, r/2)``
    accepts, and no source in the component of ``c`` inside ``B(c, r)``
    rejects.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    a = _cell_array(A)
    if len(a) == 0:
        raise ValueError("neighborhood of an empty set")
    h = dom.h
    src = cells_to_mask(dom, (tuple(c) for c in a.tolist() if dom.in_grid(c))) & dom.mask
    out = {(int(i), int(j)) for i, j in np.argwhere(src)}
    if r <= h or not out:
        return out
    rc = int(math.ceil(r / h)) + 1
    reach = np.zeros(dom.shape, dtype=bool)
    for ai in sorted(out):
        sl, loc, _, d = _crop(dom, ai, rc)
        lab, _ = ndimage.label(dom.mask[sl] & (d < r - _EPS), structure=_STRUCT8)
        reach[sl] |= lab == lab[loc]
    reach &= ~src
    for c in map(tuple, np.argwhere(reach).tolist()):
        sl, loc, off, d = _crop(dom, c, rc)
        sub = dom.mask[sl]
        lab, _ = ndimage.label(sub & (d < r - _EPS), structure=_STRUCT8)
        near = src[sl] & (lab == lab[loc])
        if not near.any():
            continue
        lab2, _ = ndimage.label(sub & (d < r / 2 - _EPS), structure=_STRUCT8)
        if (src[sl] & (lab2 == lab2[loc]) & (lab2 > 0)).any():
            out.add(c)
            continue
        cand = np.argwhere(near)
        order = np.argsort(d[near], kind="stable")
        I, J = np.ogrid[0:sub.shape[0], 0:sub.shape[1]]
        for si, sj in cand[order]:
            ds = h * np.sqrt((I - si) ** 2 + (J - sj) ** 2)
            lab3, _ = ndimage.label(sub & (d < r - _EPS) & (ds < r - _EPS), structure=_STRUCT8)
            if lab3[loc] and lab3[loc] == lab3[si, sj]:
                out.add(c)
                break
    return out
