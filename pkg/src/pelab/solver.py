"""p-harmonic Dirichlet and obstacle solves on the node-augmented grid.

Boundary data lives on boundary nodes, not on complement cells, so the two
sides of a slit can carry different values.  A node whose datum is NaN is
left free; it then acts as a zero-flux boundary.
"""
from __future__ import annotations

import ast
import logging
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import CellIndex, GridDomain
from .graph import domain_graph
from .metrics import _maz_lo
from .pmin import InfeasibleError, SolverOptions, minimize
from .prime_end import BoundaryNode, build_boundary_nodes, pushforward
from .sobolev_capacity import GridFunction, ambient_capacity, prime_end_capacity

log = logging.getLogger(__name__)


class DegenerateBoundaryError(ValueError):
    """No resolved node carries data, so the Dirichlet problem is not posed."""


# ------------------------------------------------------------ data rules

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow, ast.Mod: operator.mod}
_CMPOPS = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge,
           ast.Eq: operator.eq, ast.NotEq: operator.ne}
_FUNCS = {"abs": abs, "min": min, "max": max, "sqrt": math.sqrt, "sin": math.sin, "cos": math.cos,
          "exp": math.exp, "log": math.log, "floor": math.floor, "hypot": math.hypot}
_CONSTS = {"pi": math.pi, "nan": math.nan, "inf": math.inf}


class RuleError(ValueError):
    pass


def compile_rule(expr: str) -> Callable[..., float]:
    """Compile an arithmetic expression in ``x, y, ax, ay`` into a function.

    Supports numbers, arithmetic, comparisons, ``a if c else b``, ``and``,
    ``or``, ``not`` and a few math functions.  ``x, y`` are the anchor
    coordinates; ``ax, ay`` are the centroid of the approach cells.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise RuleError(f"cannot parse data rule {expr!r}: {exc.msg}") from None

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise RuleError(f"unknown name {node.id!r} in data rule")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
            v = ev(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else (+v if isinstance(node.op, ast.UAdd) else float(not v))
        if isinstance(node, ast.Compare):
            left = ev(node.left, env)
            for op, right in zip(node.ops, node.comparators):
                r = ev(right, env)
                if type(op) not in _CMPOPS or not _CMPOPS[type(op)](left, r):
                    return 0.0
                left = r
            return 1.0
        if isinstance(node, ast.BoolOp):
            vals = [ev(v, env) for v in node.values]
            return float(all(vals)) if isinstance(node.op, ast.And) else float(any(vals))
        if isinstance(node, ast.IfExp):
            return ev(node.body, env) if ev(node.test, env) else ev(node.orelse, env)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return float(_FUNCS[node.func.id](*[ev(a, env) for a in node.args]))
        raise RuleError(f"unsupported syntax in data rule: {ast.dump(node)[:60]}")

    def rule(x, y, ax=None, ay=None):
        env = {"x": x, "y": y, "ax": x if ax is None else ax, "ay": y if ay is None else ay}
        try:
            return ev(tree, env)
        except (ArithmeticError, ValueError, TypeError) as exc:
            if isinstance(exc, RuleError):
                raise
            raise RuleError(f"data rule {expr!r} fails at x={x!r}, y={y!r}: {exc}") from None

    rule.expr = expr
    return rule


def node_data(dom: GridDomain, rule) -> np.ndarray:
    """Evaluate a rule (expression string or callable on a node) at every node."""
    census = build_boundary_nodes(dom)
    if isinstance(rule, str):
        f = compile_rule(rule)
        h, ox, oy = dom.h, dom.origin[0], dom.origin[1]

        def call(n: BoundaryNode):
            ci, cj = n.approach_centroid
            return f(n.anchor_xy[0], n.anchor_xy[1], ox + ci * h, oy + cj * h)
    else:
        call = rule
    return np.array([float(call(n)) for n in census], dtype=float)


# --------------------------------------------------------------- problems

@dataclass(frozen=True, eq=False)
class DirichletProblem:
    dom: GridDomain
    data: np.ndarray  # per census node; NaN = free
    p: float = 2.0
    opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if len(self.data) != len(build_boundary_nodes(self.dom)):
            raise ValueError("data length does not match the node census")

    @property
    def nodes(self) -> Sequence[BoundaryNode]:
        return build_boundary_nodes(self.dom)

    def with_data(self, data: np.ndarray) -> "DirichletProblem":
        return DirichletProblem(self.dom, np.asarray(data, dtype=float), self.p, self.opts)


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    base: DirichletProblem
    psi: np.ndarray | GridFunction  # obstacle on domain cells; -inf or NaN where absent


def _fixed(prob: DirichletProblem):
    g = domain_graph(prob.dom)
    nv = g.vertex_of_node
    sel = (nv >= 0) & np.isfinite(prob.data)
    if not sel.any():
        raise DegenerateBoundaryError("no resolved boundary node carries data; the boundary has zero capacity")
    return g, nv[sel], prob.data[sel]


def solve_dirichlet(prob: DirichletProblem, x0: GridFunction | None = None) -> GridFunction:
    """p-harmonic function with the given node data."""
    g, fixed, vals = _fixed(prob)
    if np.all(vals == vals[0]):
        # constants minimize; the domain graph is connected
        x = np.full(g.n, vals[0])
        x[fixed] = vals
        u = GridFunction.from_vector(g, x)
        return _with_free_nodes(u, prob)
    start = x0.to_vector() if x0 is not None else None
    x, info = minimize(g, prob.p, fixed, vals, x0=start, opts=prob.opts)
    log.debug("dirichlet solve: p=%s iterations=%d residual=%.3e", prob.p, info.iterations, info.residual)
    return _with_free_nodes(GridFunction.from_vector(g, x), prob)


def _with_free_nodes(u: GridFunction, prob: DirichletProblem) -> GridFunction:
    nv = u.node_values.copy()
    census = build_boundary_nodes(prob.dom)
    for n in census.unresolved:
        nv[n.id] = np.nan
    return GridFunction(u.dom, u.values, nv, u.kind)


def solve_obstacle(prob: ObstacleProblem) -> GridFunction:
    """Least p-energy function above ``psi`` on cells with the given node data."""
    base = prob.base
    g, fixed, vals = _fixed(base)
    psi = prob.psi.values if isinstance(prob.psi, GridFunction) else np.asarray(prob.psi, dtype=float)
    if psi.shape != base.dom.shape:
        raise ValueError("obstacle shape does not match the domain grid")
    bad = np.argwhere(base.dom.mask & np.isposinf(psi))
    if len(bad):
        raise InfeasibleError(f"obstacle is +inf at cell {tuple(int(t) for t in bad[0])}")
    lower = np.full(g.n, -np.inf)
    m = base.dom.mask
    lower[g.vertex_of_cell[m]] = np.where(np.isnan(psi[m]), -np.inf, psi[m])
    x, info = minimize(g, base.p, fixed, vals, lower=lower, opts=base.opts)
    return _with_free_nodes(GridFunction.from_vector(g, x), base)


def complementarity_residual(prob: ObstacleProblem, u: GridFunction, tol: float = 1e-8) -> float:
    """Largest p-Laplacian residual at cells strictly above the obstacle."""
    base = prob.base
    g = domain_graph(base.dom)
    x = u.to_vector()
    x = np.where(np.isnan(x), 0.0, x)
    D = g.incidence
    t = D @ x
    flux = D.T @ (g.emeasure * np.abs(t) ** (base.p - 2) * t)
    m = base.dom.mask
    cells = g.vertex_of_cell[m]
    psi = prob.psi.values if isinstance(prob.psi, GridFunction) else np.asarray(prob.psi, dtype=float)
    above = u.values[m] > np.nan_to_num(psi[m], nan=-np.inf) + tol
    return float(np.abs(flux[cells[above]]).max(initial=0.0)) / base.dom.h**2


# ---------------------------------------------------------- comparisons

@dataclass(frozen=True)
class ComparisonReport:
    max_violation: float
    node_violation: float
    holds: bool


def comparison_check(u: GridFunction, v: GridFunction, tol: float = 1e-9) -> ComparisonReport:
    """Check ``v <= u + tol`` on cells (given it on nodes)."""
    if u.dom is not v.dom:
        raise ValueError("functions on different domains")
    dn = v.node_values - u.node_values
    dn = dn[np.isfinite(dn)]
    dc = v.values - u.values
    dc = dc[np.isfinite(dc)]
    node_v = float(dn.max(initial=-np.inf))
    cell_v = float(dc.max(initial=-np.inf))
    return ComparisonReport(cell_v, node_v, cell_v <= tol)


# ---------------------------------------------------------------- Perron

@dataclass
class PerronReport:
    upper_minus_lower: float
    resolutive: bool
    perturbation_gaps: list = field(default_factory=list)
    tol: float = 0.0
    detail: dict = field(default_factory=dict)
    fields: list = field(default_factory=list, repr=False)  # per-member difference fields, if kept

    def to_json(self) -> dict:
        return {"upper_minus_lower": self.upper_minus_lower, "resolutive": self.resolutive, "tol": self.tol,
                "perturbation_gaps": self.perturbation_gaps, **self.detail}


def perron_envelopes(prob: DirichletProblem, tol: float | None = None):
    """Lower and upper envelopes from data relaxed near unresolved anchors.

    Every resolved node within ``4h`` of an unresolved anchor gets the
    largest datum in that neighbourhood plus ``tol`` (upper) or the smallest
    minus ``tol`` (lower).  Other data are unchanged.
    """
    dom = prob.dom
    tol = dom.h if tol is None else tol
    census = build_boundary_nodes(dom)
    data = prob.data
    lo, hi = data.copy(), data.copy()
    res = [n for n in census.resolved if np.isfinite(data[n.id])]
    if census.unresolved and res:
        A = np.array([n.anchor for n in res], dtype=float)
        vals = np.array([data[n.id] for n in res])
        for u in census.unresolved:
            d = np.hypot(A[:, 0] - u.anchor[0], A[:, 1] - u.anchor[1]) * dom.h
            near = d <= 4 * dom.h + 1e-12
            if not near.any():
                continue
            top, bot = vals[near].max() + tol, vals[near].min() - tol
            for k in np.flatnonzero(near):
                nid = res[k].id
                hi[nid] = max(hi[nid], top)
                lo[nid] = min(lo[nid], bot)
    return prob.with_data(lo), prob.with_data(hi)


def perron_gap(prob: DirichletProblem, tol: float | None = None) -> PerronReport:
    tol = prob.dom.h if tol is None else tol
    lo_p, hi_p = perron_envelopes(prob, tol)
    if np.array_equal(lo_p.data, prob.data, equal_nan=True) and np.array_equal(hi_p.data, prob.data, equal_nan=True):
        return PerronReport(0.0, True, tol=tol, detail={"relaxed_nodes": 0})
    lower = solve_dirichlet(lo_p)
    upper = solve_dirichlet(hi_p)
    diff = upper.values - lower.values
    k = np.unravel_index(np.nanargmax(diff), diff.shape)
    gap = max(float(diff[k]), 0.0)
    changed = int(np.sum((lo_p.data != prob.data) | (hi_p.data != prob.data)))
    return PerronReport(gap, gap <= 10 * tol, tol=tol,
                        detail={"relaxed_nodes": changed, "max_at": list(prob.dom.center(k))})


# ------------------------------------------------------ perturbation sweeps

def anchored_in(dom: GridDomain, E: Iterable[CellIndex]) -> np.ndarray:
    """Indicator over the node census of nodes whose anchor lies in E."""
    E = set(map(tuple, E))
    return np.array([1.0 if n.anchor in E else 0.0 for n in build_boundary_nodes(dom)])


@dataclass
class SweepMember:
    label: str
    dom: GridDomain
    E: frozenset


def perturbation_experiment(members: Sequence[SweepMember], f, p: float, probes: Sequence[tuple[float, float]],
                            opts: SolverOptions | None = None, with_capacities: bool = True,
                            keep_fields: bool = False) -> PerronReport:
    """Solve with data ``f`` and ``f + chi_E`` on each member and tabulate the differences.

    Per member the table records the difference at each probe, the largest
    difference over all cells, ``Cbar(P(E))`` and ``C(E)``.  Trend flags:
    probe differences strictly decreasing along the sweep, ``Cbar``
    non-increasing, and ``C(E)`` within 10% of the first member.
    """
    opts = opts or SolverOptions()
    rows = []
    fields = []
    for m in members:
        dom = m.dom
        base = node_data(dom, f)
        chi = anchored_in(dom, m.E)
        prob = DirichletProblem(dom, base, p, opts)
        if np.all(base[np.isfinite(base)] == 0):
            u_f = GridFunction.from_vector(domain_graph(dom), np.zeros(domain_graph(dom).n))
            u_f = _with_free_nodes(u_f, prob)
            u_h = solve_dirichlet(prob.with_data(base + chi))
            diff = u_h
        else:
            u_f = solve_dirichlet(prob)
            u_h = solve_dirichlet(prob.with_data(base + chi), x0=u_f)
            diff = u_h - u_f
        absdiff = np.abs(diff.values)
        row = {"member": m.label, "h": dom.h, "n_cells": dom.n_cells,
               "perturbed_nodes": int(chi.sum()),
               "gaps": [float(absdiff[dom.snap(q)]) for q in probes],
               "max_gap": float(np.nanmax(absdiff))}
        if with_capacities:
            row["cbar_PE"] = prime_end_capacity(dom, pushforward(dom, m.E), p, opts)
            row["cp_E"] = ambient_capacity(dom, m.E, p, opts=opts).value if m.E else 0.0
        rows.append(row)
        if keep_fields:
            fields.append(diff)
        log.info("member %s: gaps %s", m.label, row["gaps"])
    flags = sweep_trends(rows)
    return PerronReport(max((r["max_gap"] for r in rows), default=0.0), True, rows, detail={"trends": flags},
                        fields=fields)


def sweep_trends(rows: list[dict]) -> dict:
    out = {}
    n_probe = len(rows[0]["gaps"]) if rows else 0
    for k in range(n_probe):
        col = [r["gaps"][k] for r in rows]
        out[f"gap_{k}_strictly_decreasing"] = all(b < a for a, b in zip(col, col[1:]))
    if rows and "cbar_PE" in rows[0]:
        cb = [r["cbar_PE"] for r in rows]
        out["cbar_nonincreasing"] = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(cb, cb[1:]))
        cp = [r["cp_E"] for r in rows]
        out["cp_within_10pct"] = all(abs(c - cp[0]) < 0.1 * abs(cp[0]) for c in cp)
    return out


# ---------------------------------------------------------- McShane

@dataclass(frozen=True)
class Extension:
    values: np.ndarray  # per census node
    lipschitz: float
    unresolved: tuple


def node_distance(dom: GridDomain, a: BoundaryNode, b: BoundaryNode) -> float:
    """Mazurkiewicz lower bound between two nodes, through their first approach cells."""
    if a.id == b.id:
        return 0.0
    ca, cb = min(a.approach), min(b.approach)
    if ca == cb:
        return 0.0
    return _maz_lo(dom, ca, cb)


def lipschitz_extend(dom: GridDomain, f: dict[int, float], nodes: Sequence[BoundaryNode] | None = None) -> Extension:
    """McShane extension ``F(x) = min_y f(y) + L d(x, y)`` over the support of ``f``.

    ``L`` is the largest slope between support nodes; ``d`` is the node
    distance above.  Nodes at infinite distance from the support are left
    NaN and reported.
    """
    census = build_boundary_nodes(dom)
    nodes = list(census) if nodes is None else list(nodes)
    if not f:
        raise ValueError("extension needs a nonempty support")
    sup = [census[k] for k in sorted(f)]
    L = 0.0
    for i, a in enumerate(sup):
        for b in sup[i + 1:]:
            d = node_distance(dom, a, b)
            if d > 0 and math.isfinite(d):
                L = max(L, abs(f[a.id] - f[b.id]) / d)
    vals = np.full(len(census), np.nan)
    bad = []
    for n in nodes:
        if n.id in f:
            vals[n.id] = f[n.id]
            continue
        best = math.inf
        for s in sup:
            d = node_distance(dom, n, s)
            best = min(best, f[s.id] + L * d)
        if math.isfinite(best):
            vals[n.id] = best
        else:
            bad.append(n.id)
    return Extension(vals, L, tuple(bad))
