"""Discrete Newtonian norms and the ambient and prime-end capacities.

The minimal upper gradient of a grid function is its edge difference
quotient, so the N^{1,p} norm to the p-th power is

    sum_v mu_v |u_v|^p  +  sum_e m_e |(u_a - u_b) / h|^p

on the relevant graph (see :mod:`pelab.graph`).  Both capacities minimize
this over functions that equal 1 on the target; values below 0 or above 1
never help, so minimizers are clipped to ``[0, 1]``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .domain import CellIndex, GridDomain
from .graph import PGraph, ambient_graph, domain_graph
from .pmin import SolverOptions, energy_terms, minimize
from .prime_end import PrimeSet, build_boundary_nodes, pullback, pushforward

KINDS = ("ambient_cp", "prime_end_cp")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on cells (NaN where undefined) and on boundary nodes.

    ``kind`` is ``"domain"`` (domain cells plus nodes) or ``"ambient"``
    (every cell of the bounding grid, no nodes).
    """

    dom: GridDomain
    values: np.ndarray
    node_values: np.ndarray
    kind: str = "domain"

    def __post_init__(self):
        if self.values.shape != self.dom.shape:
            raise ValueError("value array does not match the domain grid")

    @property
    def graph(self) -> PGraph:
        return domain_graph(self.dom) if self.kind == "domain" else ambient_graph(self.dom)

    @classmethod
    def from_vector(cls, g: PGraph, x: np.ndarray) -> "GridFunction":
        vals = np.full(g.dom.shape, np.nan)
        m = g.vertex_of_cell >= 0
        vals[m] = x[g.vertex_of_cell[m]]
        nv = np.full(len(g.vertex_of_node), np.nan)
        k = g.vertex_of_node >= 0
        nv[k] = x[g.vertex_of_node[k]]
        return cls(g.dom, vals, nv, g.kind)

    @classmethod
    def constant(cls, dom: GridDomain, c: float) -> "GridFunction":
        vals = np.where(dom.mask, float(c), np.nan)
        return cls(dom, vals, np.full(len(build_boundary_nodes(dom)), float(c)))

    def to_vector(self) -> np.ndarray:
        g = self.graph
        x = np.full(g.n, np.nan)
        m = g.vertex_of_cell >= 0
        x[g.vertex_of_cell[m]] = self.values[m]
        k = g.vertex_of_node >= 0
        x[g.vertex_of_node[k]] = self.node_values[k]
        return x

    def _check(self, other: "GridFunction"):
        if other.dom is not self.dom or other.kind != self.kind:
            raise ValueError("grid functions live on different domains")

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.dom, self.values - other.values, self.node_values - other.node_values, self.kind)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.dom, self.values + other.values, self.node_values + other.node_values, self.kind)

    def scale(self, c: float) -> "GridFunction":
        return GridFunction(self.dom, c * self.values, c * self.node_values, self.kind)

    def cell_values(self) -> np.ndarray:
        return self.values[self.dom.mask] if self.kind == "domain" else self.values.ravel()

    def at(self, point) -> float:
        """Value at the domain cell nearest to ``point``."""
        c = self.dom.snap(point)
        return float(self.values[c])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        X, Y = self.dom.centers()
        for i, j in np.argwhere(np.isfinite(self.values)):
            w.writerow([repr(float(X[i, j])), repr(float(Y[i, j])), repr(float(self.values[i, j]))])
        return buf.getvalue()


@dataclass(frozen=True)
class EnergyReport:
    lp_term: float
    gradient_term: float

    @property
    def norm_p_power(self) -> float:
        return self.lp_term + self.gradient_term

    def norm(self, p: float) -> float:
        return self.norm_p_power ** (1.0 / p)


def energy(u: GridFunction, p: float) -> EnergyReport:
    """Lp and gradient terms of ``u``; node vertices carry no measure."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    lp, grad = energy_terms(u.graph, u.to_vector(), p)
    return EnergyReport(lp, grad)


@dataclass(frozen=True)
class CapacityProblem:
    dom: GridDomain
    target: PrimeSet
    kind: str
    p: float
    zero_set: frozenset = frozenset()
    opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown capacity kind {self.kind!r}; expected one of {KINDS}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.target.is_empty():
            raise ValueError("capacity target is empty")


@dataclass(frozen=True)
class CapacityResult:
    kind: str
    p: float
    value: float
    minimizer: GridFunction
    iterations: int
    residual: float

    def to_json(self) -> dict:
        return {"kind": self.kind, "p": self.p, "value": self.value,
                "iterations": self.iterations, "residual": self.residual}


def as_target(dom: GridDomain, cells: Iterable[CellIndex] = (), nodes: Iterable[int] = ()) -> PrimeSet:
    return PrimeSet(frozenset(map(tuple, cells)), frozenset(nodes))


def capacity(problem: CapacityProblem) -> CapacityResult:
    """Minimize the N^{1,p} norm to the p-th power over functions equal to 1 on the target.

    ``ambient_cp`` works on the whole bounding grid; target nodes are
    ignored there and their anchors should be listed as cells instead.
    ``prime_end_cp`` works on domain cells plus resolved nodes; target cells
    outside the domain are ignored.  ``zero_set`` cells are held at 0
    (a condenser).
    """
    dom, p = problem.dom, problem.p
    g = ambient_graph(dom) if problem.kind == "ambient_cp" else domain_graph(dom)
    one = np.concatenate([g.cell_vertices([c for c in problem.target.cells if dom.in_grid(c)]),
                          g.node_vertices(problem.target.nodes)]).astype(np.int64)
    zero = g.cell_vertices([c for c in problem.zero_set if dom.in_grid(c)])
    zero = np.setdiff1d(zero, one)
    if len(one) == 0:
        u = np.zeros(g.n)
        return CapacityResult(problem.kind, p, 0.0, GridFunction.from_vector(g, u), 0, 0.0)
    fixed = np.concatenate([one, zero])
    vals = np.concatenate([np.ones(len(one)), np.zeros(len(zero))])
    x, info = minimize(g, p, fixed, vals, lam=1.0, opts=problem.opts)
    x = np.clip(x, 0.0, 1.0)
    lp, grad = energy_terms(g, x, p)
    return CapacityResult(problem.kind, p, lp + grad, GridFunction.from_vector(g, x), info.iterations,
                          info.residual)


def ambient_capacity(dom: GridDomain, cells: Iterable[CellIndex], p: float, zero_set: Iterable[CellIndex] = (),
                     opts: SolverOptions | None = None) -> CapacityResult:
    return capacity(CapacityProblem(dom, as_target(dom, cells), "ambient_cp", p, frozenset(map(tuple, zero_set)),
                                    opts or SolverOptions()))


def prime_end_capacity(dom: GridDomain, target: PrimeSet, p: float,
                       opts: SolverOptions | None = None) -> float:
    """C-bar_p^P of a prime-end set, with the convention that the empty set has capacity 0."""
    if target.is_empty():
        return 0.0
    return capacity(CapacityProblem(dom, target, "prime_end_cp", p, opts=opts or SolverOptions())).value


def compare_capacities(dom: GridDomain, E: Iterable[CellIndex], p: float, tol: float = 1e-6,
                       opts: SolverOptions | None = None) -> dict:
    """Both sides of ``Cbar(P(E)) <= C(E)`` and ``Cbar(F) <= C(P^-1(F))`` with ``F = P(E)``."""
    E = frozenset(map(tuple, E))
    P = pushforward(dom, E)
    back = pullback(dom, P)
    cbar_push = prime_end_capacity(dom, P, p, opts)
    cp_E = ambient_capacity(dom, E, p, opts=opts).value if E else 0.0
    cp_back = ambient_capacity(dom, back, p, opts=opts).value if back else 0.0
    push_slack = cp_E - cbar_push
    pull_slack = cp_back - cbar_push
    return {
        "p": p,
        "cbar_pushforward": cbar_push,
        "cp_E": cp_E,
        "cp_pullback": cp_back,
        "pushforward_slack": push_slack,
        "pullback_slack": pull_slack,
        "pushforward_holds": push_slack >= -tol,
        "pullback_holds": pull_slack >= -tol,
    }


def capacity_axioms_check(dom: GridDomain, sets: list[PrimeSet], p: float, tol: float = 1e-6,
                          opts: SolverOptions | None = None) -> dict:
    """Monotonicity, finite subadditivity and the measure lower bound on given sets."""
    if len(sets) < 2:
        raise ValueError("need at least two sets")
    vals = [prime_end_capacity(dom, s, p, opts) for s in sets]
    union = sets[0]
    for s in sets[1:]:
        union = union | s
    cu = prime_end_capacity(dom, union, p, opts)
    mono = []
    for i, a in enumerate(sets):
        for j, b in enumerate(sets):
            if i != j and a <= b:
                mono.append({"inner": i, "outer": j, "slack": vals[j] - vals[i]})
    h2 = dom.h**2
    measure = [{"set": i, "slack": v - h2 * sum(1 for c in s.cells if dom.is_inside(c))}
               for i, (s, v) in enumerate(zip(sets, vals))]
    sub_slack = sum(vals) - cu
    return {
        "p": p,
        "values": vals,
        "union": cu,
        "monotone": mono,
        "monotone_holds": all(m["slack"] >= -tol for m in mono),
        "subadditive_slack": sub_slack,
        "subadditive_holds": sub_slack >= -tol,
        "measure": measure,
        "measure_holds": all(m["slack"] >= -tol for m in measure),
    }


def dilate(dom: GridDomain, cells: Iterable[CellIndex], r: float) -> frozenset:
    """Bounding-grid cells within distance ``r`` of the given cells (outer approximations)."""
    cells = np.array(sorted(set(map(tuple, cells))), dtype=float).reshape(-1, 2)
    I, J = np.meshgrid(np.arange(dom.nx), np.arange(dom.ny), indexing="ij")
    pts = np.stack([I.ravel(), J.ravel()], axis=1).astype(float)
    d, _ = cKDTree(cells).query(pts)
    keep = d * dom.h <= r + 1e-12
    return frozenset((int(i), int(j)) for i, j in pts[keep].astype(int))


def annulus_zero_set(dom: GridDomain, center, radius: float) -> frozenset:
    """Bounding-grid cells at distance at least ``radius`` from ``center``."""
    X, Y = dom.centers()
    far = np.hypot(X - center[0], Y - center[1]) >= radius - 1e-12
    return frozenset((int(i), int(j)) for i, j in np.argwhere(far))


def disk(dom: GridDomain, center, radius: float) -> frozenset:
    X, Y = dom.centers()
    inside = np.hypot(X - center[0], Y - center[1]) <= radius + 1e-12
    return frozenset((int(i), int(j)) for i, j in np.argwhere(inside))
