"""Boundary nodes, chains, ends, and the pushforward/pullback maps.

A boundary node is a pair (anchor, approach component).  Anchors are the
complement cells 4-adjacent to the domain.  Around each anchor the domain
cells inside the closed ball ``B(anchor, rho)`` split into 4-connected
components; the components that contain a 4-neighbour of the anchor are the
distinct ways of reaching it.  A slit cell is reached from above and from
below and so carries two nodes, while a convex edge cell carries one.

Chains are finite nested lists of cell sets.  Everything here uses
4-connectivity except the Mazurkiewicz separations, which come from
:mod:`pelab.metrics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .domain import _STRUCT4, CellIndex, DomainError, GridDomain, cells_to_mask
from .metrics import maz_neighborhood, maz_separation

APPROACH_RADII = (2.0, 3.0, 4.0)  # in units of h
_OFF4 = ((1, 0), (-1, 0), (0, 1), (0, -1))


class ChainError(ValueError):
    """A proposed level list violates the chain conditions."""

    def __init__(self, level: int, condition: str, detail: str = ""):
        self.level = level
        self.condition = condition
        msg = f"level {level} fails condition ({condition})"
        super().__init__(msg + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class BoundaryNode:
    id: int
    anchor: CellIndex
    anchor_xy: tuple[float, float]
    approach_id: int
    approach: frozenset
    stable_radius: float
    resolved: bool = True

    @property
    def approach_centroid(self) -> tuple[float, float]:
        a = np.array(sorted(self.approach), dtype=float).mean(axis=0)
        return (float(a[0]), float(a[1]))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "anchor": list(self.anchor_xy),
            "anchor_cell": list(self.anchor),
            "approach_id": self.approach_id,
            "approach_cells": sorted(list(c) for c in self.approach),
            "stable_radius": self.stable_radius,
            "resolved": self.resolved,
        }


@dataclass(frozen=True)
class NodeCensus(Sequence):
    """All boundary nodes of a domain, ordered by anchor then approach id."""

    nodes: tuple
    counts: dict = field(repr=False)

    def __getitem__(self, k):
        return self.nodes[k]

    def __len__(self):
        return len(self.nodes)

    @property
    def resolved(self) -> list[BoundaryNode]:
        return [n for n in self.nodes if n.resolved]

    @property
    def unresolved(self) -> list[BoundaryNode]:
        return [n for n in self.nodes if not n.resolved]

    def at(self, anchor: CellIndex) -> list[BoundaryNode]:
        return [n for n in self.nodes if n.anchor == tuple(anchor)]

    def anchors(self) -> set[CellIndex]:
        return {n.anchor for n in self.nodes}

    def to_json(self) -> list[dict]:
        return [n.to_json() for n in self.nodes]


def _approach_groups(dom: GridDomain, a: CellIndex, nbrs: list, rho: float) -> list[list]:
    h = dom.h
    rc = int(math.floor(rho / h + 1e-9))
    i0, j0 = max(0, a[0] - rc), max(0, a[1] - rc)
    i1, j1 = min(dom.nx, a[0] + rc + 1), min(dom.ny, a[1] + rc + 1)
    I, J = np.ogrid[i0:i1, j0:j1]
    ball = (I - a[0]) ** 2 + (J - a[1]) ** 2 <= (rho / h) ** 2 + 1e-9
    lab, _ = ndimage.label(dom.mask[i0:i1, j0:j1] & ball, structure=_STRUCT4)
    groups: dict[int, list] = {}
    for c in nbrs:
        groups.setdefault(int(lab[c[0] - i0, c[1] - j0]), []).append(c)
    return [groups[k] for k in sorted(groups, key=lambda k: min(groups[k]))]


@lru_cache(maxsize=16)
def build_boundary_nodes(dom: GridDomain) -> NodeCensus:
    """One node per (anchor, approach component), with stability flags.

    Component counts are taken at radii 2h, 3h and 4h.  A node is resolved
    when the count at 3h equals the count at 4h; its ``stable_radius`` is
    the smallest radius from which the count no longer changes.  Unresolved
    anchors still get nodes (grouped at 4h) but are flagged.
    """
    h = dom.h
    anchors = dom.boundary_cells()
    nodes: list[BoundaryNode] = []
    counts: dict = {}
    for a in anchors:
        a = (int(a[0]), int(a[1]))
        nbrs = [(a[0] + di, a[1] + dj) for di, dj in _OFF4 if dom.is_inside((a[0] + di, a[1] + dj))]
        nbrs.sort()
        if len(nbrs) == 1:
            groups = [nbrs]
            seq = [1, 1, 1]
        else:
            per = [_approach_groups(dom, a, nbrs, r * h) for r in APPROACH_RADII]
            seq = [len(g) for g in per]
            groups = per[-1]
        counts[a] = tuple(seq)
        resolved = seq[1] == seq[2]
        k = len(seq) - 1
        while k > 0 and seq[k - 1] == seq[-1]:
            k -= 1
        stable = APPROACH_RADII[k] * h
        xy = dom.center(a)
        for gid, g in enumerate(groups):
            nodes.append(BoundaryNode(len(nodes), a, xy, gid, frozenset(g), stable, resolved))
    return NodeCensus(tuple(nodes), counts)


# ---------------------------------------------------------------- chains

@dataclass(frozen=True)
class Chain:
    levels: tuple
    separations: tuple
    impression_cells: frozenset
    dom: GridDomain = field(repr=False, compare=False)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def to_json(self) -> dict:
        ids = self.dom.cell_ids
        return {
            "levels": [sorted(int(ids[c]) for c in lv) for lv in self.levels],
            "separations": [None if math.isinf(s) else s for s in self.separations],
            "impression": sorted(list(self.dom.center(a)) for a in self.impression_cells),
        }


@dataclass(frozen=True)
class End:
    representative: Chain
    singleton: bool
    node: BoundaryNode | None = None


def relative_boundary(dom: GridDomain, E: frozenset) -> set[CellIndex]:
    """Cells of E with a 4-neighbour in the domain outside E."""
    m = cells_to_mask(dom, E)
    outside = dom.mask & ~m
    grown = ndimage.binary_dilation(outside, structure=_STRUCT4)
    return {(int(i), int(j)) for i, j in np.argwhere(m & grown)}


def adjacent_anchors(dom: GridDomain, E: Iterable[CellIndex]) -> frozenset:
    m = cells_to_mask(dom, E)
    grown = ndimage.binary_dilation(m, structure=_STRUCT4)
    return frozenset((int(i), int(j)) for i, j in np.argwhere(grown & ~dom.mask))


def _is_connected(dom: GridDomain, E: frozenset) -> bool:
    _, n = ndimage.label(cells_to_mask(dom, E), structure=_STRUCT4)
    return n == 1


def validate_chain(dom: GridDomain, levels: Sequence[Iterable[CellIndex]]) -> Chain:
    """Check the chain conditions on a finite level list.

    Conditions are checked level by level in this order: ``acceptable``
    (nonempty, 4-connected, domain cells only, and for all but the deepest
    level 4-adjacent to the complement), ``a`` (nesting), ``b`` (positive
    Mazurkiewicz separation of consecutive relative boundaries; an empty
    boundary counts as infinitely far) and ``c`` (the deepest level touches
    the complement, so the finite-depth impression is nonempty).
    """
    if not levels:
        raise ValueError("a chain needs at least one level")
    lv = [frozenset(map(tuple, L)) for L in levels]
    seps = []
    bnd_prev = None
    K = len(lv)
    for k, E in enumerate(lv):
        if not E or any(not dom.is_inside(c) for c in E):
            raise ChainError(k, "acceptable", "empty or leaves the domain")
        if not _is_connected(dom, E):
            raise ChainError(k, "acceptable", "not connected")
        touches = bool(adjacent_anchors(dom, E))
        if not touches:
            raise ChainError(k, "c" if k == K - 1 else "acceptable", "does not touch the boundary")
        if k > 0 and not E <= lv[k - 1]:
            raise ChainError(k, "a", "not contained in the previous level")
        bnd = relative_boundary(dom, E)
        if k > 0:
            if not bnd or not bnd_prev:
                s = math.inf
            else:
                s = maz_separation(dom, bnd_prev, bnd)
            if not s > 0:
                raise ChainError(k, "b", "relative boundaries are not separated")
            seps.append(s)
        bnd_prev = bnd
    return Chain(tuple(lv), tuple(seps), adjacent_anchors(dom, lv[-1]), dom)


def divides(a: Chain, b: Chain) -> bool:
    """True iff every level of ``b`` contains some level of ``a``."""
    return all(any(E <= F for E in a.levels) for F in b.levels)


def equivalent(a: Chain, b: Chain) -> bool:
    return divides(a, b) and divides(b, a)


def make_end(chain: Chain) -> End:
    """Wrap a chain as an end, attaching the node of a singleton impression."""
    dom = chain.dom
    if len(chain.impression_cells) != 1:
        return End(chain, False, None)
    (anchor,) = chain.impression_cells
    deepest = chain.levels[-1]
    best, overlap = None, -1
    for n in build_boundary_nodes(dom).at(anchor):
        ov = len(n.approach & deepest)
        if ov > overlap:
            best, overlap = n, ov
    return End(chain, True, best)


def _ball_component(dom: GridDomain, center: CellIndex, r: float, seeds: Iterable[CellIndex]) -> frozenset:
    h = dom.h
    I, J = np.ogrid[0:dom.nx, 0:dom.ny]
    ball = (I - center[0]) ** 2 + (J - center[1]) ** 2 <= (r / h) ** 2 + 1e-9
    lab, _ = ndimage.label(dom.mask & ball, structure=_STRUCT4)
    ids = {int(lab[c]) for c in seeds} - {0}
    return frozenset((int(i), int(j)) for i, j in np.argwhere(np.isin(lab, list(ids))))


def approach_patch(dom: GridDomain, node: BoundaryNode) -> frozenset:
    """Smallest ball component at the anchor that joins the node's approach cells."""
    h = dom.h
    for r in (h, math.sqrt(2) * h, 2 * h, node.stable_radius):
        comp = _ball_component(dom, node.anchor, r, node.approach)
        if _is_connected(dom, comp):
            break
    else:
        comp = _ball_component(dom, node.anchor, 4 * h, node.approach)
    # drop cells that also touch other anchors, so the impression is the anchor alone
    own = frozenset(c for c in comp if adjacent_anchors(dom, [c]) <= {node.anchor})
    if node.approach <= own and _is_connected(dom, own):
        return own
    return comp


def node_chain(dom: GridDomain, node: BoundaryNode, r_max: float | None = None) -> Chain:
    """Nested ball components at a node ending in its approach patch.

    Radii halve from ``r_max`` while they stay at least ``4h``; closer radii
    would give touching discrete boundaries.  The last level is
    :func:`approach_patch`; coarser levels are dropped if they are not
    separated from the levels below them.
    """
    h = dom.h
    if r_max is None:
        r_max = 0.25 * min(dom.nx, dom.ny) * h
    radii = []
    r = r_max
    while r >= 4 * h - 1e-12:
        radii.append(r)
        r /= 2
    levels = [_ball_component(dom, node.anchor, r, node.approach) for r in radii]
    return validate_chain(dom, _separated_prefix(dom, levels, approach_patch(dom, node)))


def _separated_prefix(dom: GridDomain, levels: list, last: frozenset) -> list:
    kept: list = []
    for L in levels:
        try:
            validate_chain(dom, kept + [L])
            kept.append(L)
        except ChainError:
            pass
    while kept:
        try:
            validate_chain(dom, kept + [last])
            break
        except ChainError:
            kept.pop()
    return kept + [last]


def _rasterize(dom: GridDomain, gamma) -> tuple[list[CellIndex], list[float]]:
    """4-connected cell path of a polyline and the curve parameter of each cell.

    The parameter of a point on segment ``k`` at fraction ``f`` is ``k + f``.
    """
    pts = np.asarray(gamma, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DomainError("empty curve")
    path: list[CellIndex] = []
    param: list[float] = []

    def push(c, t):
        if not dom.is_inside(c):
            return  # a sample on a removed cell; a real crossing shows up as a gap
        if path and c == path[-1]:
            return
        if path:
            prev = path[-1]
            di, dj = c[0] - prev[0], c[1] - prev[1]
            if abs(di) > 1 or abs(dj) > 1:
                raise DomainError("curve sampling skipped a cell")
            if di and dj:
                for mid in ((c[0], prev[1]), (prev[0], c[1])):
                    if dom.is_inside(mid):
                        path.append(mid)
                        param.append(t)
                        break
                else:
                    raise DomainError(f"curve crosses a removed corner at {c}")
        path.append(c)
        param.append(t)

    if not dom.is_inside(dom.locate(pts[0])):
        raise DomainError(f"curve starts outside the domain at {tuple(pts[0])}")
    push(dom.locate(pts[0]), 0.0)
    for k in range(1, len(pts)):
        a, b = pts[k - 1], pts[k]
        n = max(1, int(math.ceil(np.abs(b - a).max() / (dom.h / 4))))
        for t in np.linspace(0, 1, n + 1)[1:]:
            push(dom.locate(a + (b - a) * t), k - 1 + float(t))
    return path, param


def chain_of_curve(dom: GridDomain, gamma, min_levels: int = 1, terminal_segments: int = 0) -> Chain:
    """Chain of Mazurkiewicz neighbourhoods of the tails of a curve.

    ``gamma`` is a polyline with ``m`` segments whose end lies in a cell
    4-adjacent to the complement.  Tails are taken in the curve parameter:
    the k-th tail is the part with parameter at least ``m - m / 2**k`` and
    its radius is ``S / 2**k`` with ``S`` the arc length.  The level is the
    4-component of the Mazurkiewicz neighbourhood containing the tail, or the
    tail itself once the radius is below ``h/2``.

    ``terminal_segments`` stops the tails from shrinking past the last that
    many segments.  A finite polyline cannot oscillate forever, so a curve
    whose cluster set is a whole boundary arc is modelled by a final sweep
    along that arc with ``terminal_segments=1``.  The deepest level is
    always kept; coarser levels that break the chain conditions are skipped.
    """
    path, param = _rasterize(dom, gamma)
    if not adjacent_anchors(dom, [path[-1]]):
        raise DomainError("curve end is not next to the boundary; its cluster set meets the interior")
    m = max(1, len(np.asarray(gamma).reshape(-1, 2)) - 1)
    cells = np.array(path, dtype=float)
    S = float(np.hypot(*np.diff(cells, axis=0).T).sum() * dom.h) if len(path) > 1 else dom.h
    tpar = np.array(param)
    levels: list[frozenset] = []
    k = 1
    while True:
        floor = m - terminal_segments if terminal_segments > 0 else m
        start = min(m - m * 2.0**-k, floor)
        r = S * 2.0**-k
        tail = [c for c, t in zip(path, tpar) if t >= start - 1e-12] or path[-1:]
        if r < dom.h / 2 or (terminal_segments > 0 and start >= floor):
            levels.append(frozenset(tail))
            break
        nb = maz_neighborhood(dom, tail, r)
        lab, _ = ndimage.label(cells_to_mask(dom, nb), structure=_STRUCT4)
        levels.append(frozenset((int(i), int(j)) for i, j in np.argwhere(lab == lab[tail[-1]])))
        k += 1
    levels = _separated_prefix(dom, levels[:-1], levels[-1])
    if len(levels) < min_levels:
        raise ChainError(len(levels), "b", "too few separated levels")
    return validate_chain(dom, levels)


# ------------------------------------------------------ prime-end sets

@dataclass(frozen=True)
class PrimeSet:
    """A subset of the node-augmented domain: cells plus node ids."""

    cells: frozenset
    nodes: frozenset

    def __le__(self, other: "PrimeSet") -> bool:
        return self.cells <= other.cells and self.nodes <= other.nodes

    def __or__(self, other: "PrimeSet") -> "PrimeSet":
        return PrimeSet(self.cells | other.cells, self.nodes | other.nodes)

    def is_empty(self) -> bool:
        return not self.cells and not self.nodes


def pushforward(dom: GridDomain, E: Iterable[CellIndex]) -> PrimeSet:
    """Domain cells of E plus every resolved node anchored in E."""
    E = frozenset(map(tuple, E))
    cells = frozenset(c for c in E if dom.is_inside(c))
    nodes = frozenset(n.id for n in build_boundary_nodes(dom).resolved if n.anchor in E)
    return PrimeSet(cells, nodes)


def pullback(dom: GridDomain, F: PrimeSet) -> frozenset:
    """Cells of F plus the anchors of its nodes."""
    census = build_boundary_nodes(dom)
    return F.cells | frozenset(census[k].anchor for k in F.nodes)


def is_open_in_graph(dom: GridDomain, P: PrimeSet) -> bool:
    """Every node of P has an approach cell in P."""
    census = build_boundary_nodes(dom)
    return all(census[k].approach & P.cells for k in P.nodes)


def density_diagnostic(dom: GridDomain, chains: Iterable[Chain]) -> list[dict]:
    """For each chain, per level: how many resolved nodes approach through it.

    ``nearest`` is the smallest distance from a node anchor whose approach
    meets the level to the chain's impression; it is finite exactly when
    some singleton end enters the level.
    """
    census = build_boundary_nodes(dom)
    out = []
    for ch in chains:
        imp = np.array(sorted(ch.impression_cells), dtype=float)
        rows = []
        for E in ch.levels:
            hits = [n for n in census.resolved if n.approach & E]
            if hits:
                a = np.array([n.anchor for n in hits], dtype=float)
                d = np.sqrt(((a[:, None, :] - imp[None, :, :]) ** 2).sum(-1)).min() * dom.h
            else:
                d = math.inf
            rows.append({"nodes": len(hits), "nearest": float(d)})
        out.append({"singleton": len(ch.impression_cells) == 1, "levels": rows,
                    "dense": all(math.isfinite(r["nearest"]) for r in rows)})
    return out
