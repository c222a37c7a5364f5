"""Minimization of the discrete p-energy with fixed values and lower bounds.

The objective on a :class:`~pelab.graph.PGraph` is

    J(u) = sum_e m_e |(D u)_e|^p + lam * sum_v mu_v |u_v|^p

with some vertices fixed.  For ``p = 2`` (and no obstacle) this is a single
sparse linear solve.  Otherwise Newton's method is applied to the
regularization ``|t|^p -> (t^2 + eps^2)^(p/2)`` with a backtracking line
search, i.e. iteratively reweighted least squares whose weights carry the
curvature correction ``((p-1) t^2 + eps^2) / (t^2 + eps^2)``.  A final
plain reweighted solve replaces the Newton iterate when it does not raise
the energy: it is a weighted Laplace solve with nonnegative right-hand side,
so values many orders of magnitude below the data are not lost to
cancellation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .graph import PGraph

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The iteration hit its limit; carries the best iterate found."""

    def __init__(self, message: str, best: np.ndarray, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.best = best
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    rel_energy_tol: float = 1e-9
    rel_step_tol: float = 1e-8
    max_iter: int = 500
    eps_factor: float = 1e-8  # eps = eps_factor * h


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    energy: float


def factorize(K: sparse.spmatrix):
    """Sparse LU of a symmetric M-matrix, keeping the diagonal as pivots."""
    K = sparse.csc_matrix(K)
    if K.shape[0] == 0:
        return lambda b: np.zeros(0)
    lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    return lu.solve


def energy_terms(g: PGraph, u: np.ndarray, p: float) -> tuple[float, float]:
    """Exact (lp, gradient) sums; vertices with NaN values are skipped."""
    a, b = g.edges[:, 0], g.edges[:, 1]
    t = (u[a] - u[b]) / g.length
    ok = np.isfinite(t)
    grad = float(np.sum(g.emeasure[ok] * np.abs(t[ok]) ** p))
    okv = np.isfinite(u) & (g.vmeasure > 0)
    lp = float(np.sum(g.vmeasure[okv] * np.abs(u[okv]) ** p))
    return lp, grad


class _Problem:
    def __init__(self, g: PGraph, p: float, fixed: np.ndarray, fixed_vals: np.ndarray, lam: float,
                 eps: float, active: np.ndarray | None = None):
        self.g, self.p, self.lam, self.eps = g, p, lam, eps
        keep = np.ones(g.n, dtype=bool) if active is None else active
        e = g.edges
        emask = keep[e[:, 0]] & keep[e[:, 1]]
        D = g.incidence[emask]
        self.me = g.emeasure[emask]
        self.mv = g.vmeasure * lam
        self.x = np.zeros(g.n)
        self.x[fixed] = fixed_vals
        isfree = keep.copy()
        isfree[fixed] = False
        self.free = np.flatnonzero(isfree)
        self.fixed = np.asarray(fixed)
        self.D = D.tocsc()
        self.DF = self.D[:, self.free].tocsc()
        self.DC = self.D[:, self.fixed].tocsc()
        self.keep = keep

    def full(self, xf: np.ndarray) -> np.ndarray:
        x = self.x.copy()
        x[self.free] = xf
        return x

    def phi(self, t, p=None):
        p = self.p if p is None else p
        return (t * t + self.eps**2) ** (p / 2) - self.eps**p

    def J(self, x: np.ndarray) -> float:
        t = self.D @ x
        val = float(self.me @ self.phi(t))
        if self.lam:
            val += float(self.mv[self.keep] @ self.phi(x[self.keep]))
        return val

    def weights(self, t):
        if self.p == 2:
            one = np.ones_like(t)
            return one, one
        s = t * t + self.eps**2
        w = s ** ((self.p - 2) / 2)
        return w, w * ((self.p - 1) * t * t + self.eps**2) / s

    def grad_hess(self, x: np.ndarray, newton: bool = True):
        p = self.p
        t = self.D @ x
        w, wn = self.weights(t)
        g = self.D.T @ (self.me * p * w * t)
        W = wn if newton else w
        H = self.DF.T @ sparse.diags(self.me * p * W) @ self.DF
        if self.lam:
            xv = x[self.free]
            vw, vwn = self.weights(xv)
            g = g.copy()
            g[self.free] += self.mv[self.free] * p * vw * xv
            H = H + sparse.diags(self.mv[self.free] * p * (vwn if newton else vw))
        return g[self.free], H.tocsc()

    def quadratic_solve(self, weights_from: np.ndarray | None = None) -> np.ndarray:
        """Minimize the weighted quadratic sum(m w (D u)^2) (+ lp) over free values."""
        if weights_from is None:
            we = np.ones_like(self.me)
            wv = np.ones(len(self.free))
        else:
            we = self.weights(self.D @ weights_from)[0]
            wv = self.weights(weights_from[self.free])[0]
        A = self.DF.T @ sparse.diags(self.me * we) @ self.DF
        if self.lam:
            A = A + sparse.diags(self.mv[self.free] * wv)
        rhs = -(self.DF.T @ (self.me * we * (self.DC @ self.x[self.fixed])))
        return factorize(A)(rhs)


def minimize(g: PGraph, p: float, fixed: np.ndarray, fixed_vals: np.ndarray, lam: float = 0.0,
             lower: np.ndarray | None = None, x0: np.ndarray | None = None,
             active: np.ndarray | None = None, opts: SolverOptions | None = None) -> tuple[np.ndarray, SolveInfo]:
    """Minimize the p-energy with ``u[fixed] = fixed_vals`` and ``u >= lower``.

    ``active`` restricts the graph to a vertex subset (edges leaving it are
    dropped); vertices outside it get NaN.  ``lower`` may contain ``-inf``.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    opts = opts or SolverOptions()
    fixed = np.asarray(fixed, dtype=np.int64)
    fixed_vals = np.asarray(fixed_vals, dtype=float)
    eps = opts.eps_factor * g.dom.h
    prob = _Problem(g, p, fixed, fixed_vals, lam, 0.0 if p == 2 else eps, active)
    nf = len(prob.free)
    lowf = None
    if lower is not None:
        lowf = np.asarray(lower, dtype=float)[prob.free]
        if not np.any(np.isfinite(lowf)):
            lowf = None
    if nf == 0:
        x = prob.x.copy()
        return _finish(prob, x, 0, 0.0)

    if p == 2 and lowf is None:
        xf = prob.quadratic_solve()
        x = prob.full(xf)
        gr, _ = prob.grad_hess(x)
        return _finish(prob, x, 1, float(np.abs(gr).max(initial=0.0)))

    # starting point
    if x0 is not None:
        xf = np.asarray(x0, dtype=float)[prob.free].copy()
    else:
        xf = prob.quadratic_solve()
    if lowf is not None:
        xf = np.maximum(xf, np.where(np.isfinite(lowf), lowf, -np.inf))
    # p < 2 has unbounded curvature at zero slope; approach the target
    # regularization through a decreasing sequence of eps values
    stages = [eps]
    if p < 2:
        e = 1.0
        while e > eps * 10:
            stages.insert(-1, e)
            e /= 10
    it = 0
    for k, e in enumerate(stages):
        prob.eps = e
        last = k == len(stages) - 1
        xf, n, resid = _newton(prob, xf, lowf, opts.max_iter - it,
                               opts.rel_energy_tol if last else 1e-6, opts.rel_step_tol if last else 1e-4)
        it += n
    x = prob.full(xf)
    Jx = prob.J(x)

    if lowf is None and p != 2:
        polished = prob.full(prob.quadratic_solve(weights_from=x))
        if prob.J(polished) <= Jx * (1 + 1e-12) + 1e-300:
            x = polished
    gr, _ = prob.grad_hess(x)
    if lowf is not None:
        free_of_bound = ~(x[prob.free] <= lowf + 1e-12)
        resid = float(np.abs(gr[free_of_bound]).max(initial=0.0))
    else:
        resid = float(np.abs(gr).max(initial=0.0))
    return _finish(prob, x, it, resid)


def _newton(prob: _Problem, xf, lowf, max_iter, tol_e, tol_s):
    x = prob.full(xf)
    Jx = prob.J(x)
    it = 0
    resid = math.inf
    while it < max_iter:
        it += 1
        gr, H = prob.grad_hess(x)
        if lowf is None:
            d = -factorize(H)(gr)
            resid = float(np.abs(gr).max())
        else:
            d, resid = _box_qp_step(H, gr, xf, lowf)
        slope = float(gr @ d)
        if slope >= 0 or not np.any(d):
            break
        alpha = 1.0
        while True:
            xn = prob.full(xf + alpha * d)
            Jn = prob.J(xn)
            if Jn <= Jx + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        if Jn > Jx:
            break
        dec = (Jx - Jn) / max(abs(Jx), 1e-300)
        step = alpha * float(np.abs(d).max()) / max(float(np.abs(xf).max()), 1e-300)
        xf = xf + alpha * d
        x, Jx = xn, Jn
        if dec < tol_e or step < tol_s:
            break
    else:
        raise ConvergenceError("p-energy minimization did not converge", x, resid, it)
    return xf, it, resid


def _finish(prob: _Problem, x: np.ndarray, it: int, resid: float):
    x = x.copy()
    x[~prob.keep] = np.nan
    lp, grad = energy_terms(prob.g, np.where(prob.keep, x, np.nan), prob.p)
    return x, SolveInfo(it, resid, grad + prob.lam * lp)


def _box_qp_step(H, gr, xf, lowf, max_iter: int = 200):
    """Newton step under ``xf + d >= lowf`` by a primal-dual active-set method.

    Solves  min 1/2 d'Hd + gr'd  s.t.  d >= lowf - xf.
    """
    bound = np.where(np.isfinite(lowf), lowf - xf, -np.inf)
    c = float(H.diagonal().mean()) or 1.0
    d = np.zeros_like(xf)
    lam = np.zeros_like(xf)
    act = np.zeros(len(xf), dtype=bool)
    H = sparse.csr_matrix(H)
    tol_d = 1e-13 * max(1.0, float(np.abs(xf).max(initial=0.0)))
    tol_l = 1e-13 * max(1.0, float(np.abs(gr).max(initial=0.0)))
    for _ in range(max_iter):
        new = np.isfinite(bound) & (lam + c * (bound - d) > 0)
        if _ > 0 and np.array_equal(new, act):
            break
        act = new
        inn = ~act
        d = np.where(act, bound, 0.0)
        if inn.any():
            Hii = H[inn][:, inn]
            rhs = -gr[inn] - H[inn][:, act] @ d[act]
            d[inn] = factorize(Hii)(rhs)
        lam = np.zeros_like(xf)
        lam[act] = (H @ d + gr)[act]
        # degenerate sets can flip on round-off; stop once KKT holds to it
        if np.all(d[inn] >= bound[inn] - tol_d) and np.all(lam[act] >= -tol_l):
            break
    else:
        raise ConvergenceError("active-set iteration did not settle", xf + d, float("nan"), max_iter)
    kkt = H @ d + gr
    resid = float(np.abs(kkt[~act]).max(initial=0.0))
    return d, resid
