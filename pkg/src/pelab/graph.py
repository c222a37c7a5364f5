"""Weighted grid graphs carrying the discrete p-energy.

Two graphs are used:

* the domain graph: domain cells (measure ``h**2``) joined by 4-neighbour
  edges, plus one zero-measure vertex per resolved boundary node joined to
  each of its approach cells;
* the ambient graph: every cell of the bounding grid with 4-neighbour edges.

All edges have length ``h`` and measure ``h**2``, so an edge contributes
``|u_a - u_b|**p / h**p * h**2`` to the gradient term.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .domain import GridDomain
from .prime_end import build_boundary_nodes


@dataclass(frozen=True, eq=False)
class PGraph:
    kind: str
    dom: GridDomain
    n: int
    edges: np.ndarray  # (E, 2) vertex pairs
    length: np.ndarray
    emeasure: np.ndarray
    vmeasure: np.ndarray
    vertex_of_cell: np.ndarray  # (nx, ny) lattice -> vertex id, -1 if absent
    vertex_of_node: np.ndarray  # census index -> vertex id, -1 if excluded

    @property
    def n_cells(self) -> int:
        return int((self.vertex_of_cell >= 0).sum())

    @property
    def incidence(self) -> sparse.csr_matrix:
        """Difference quotient operator ``(D u)_e = (u_a - u_b) / len_e``."""
        return _incidence(self)

    def cell_vertices(self, cells) -> np.ndarray:
        cells = np.asarray(sorted(cells), dtype=np.int64).reshape(-1, 2)
        v = self.vertex_of_cell[cells[:, 0], cells[:, 1]]
        return v[v >= 0]

    def node_vertices(self, node_ids) -> np.ndarray:
        v = self.vertex_of_node[np.asarray(sorted(node_ids), dtype=np.int64)]
        return v[v >= 0]


@lru_cache(maxsize=8)
def _incidence(g: PGraph) -> sparse.csr_matrix:
    E = len(g.edges)
    rows = np.repeat(np.arange(E), 2)
    cols = g.edges.ravel()
    vals = np.stack([1.0 / g.length, -1.0 / g.length], axis=1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(E, g.n))


def _lattice_edges(ids: np.ndarray) -> np.ndarray:
    out = []
    for a, b in ((ids[:-1, :], ids[1:, :]), (ids[:, :-1], ids[:, 1:])):
        ok = (a >= 0) & (b >= 0)
        out.append(np.stack([a[ok], b[ok]], axis=1))
    return np.concatenate(out)


@lru_cache(maxsize=8)
def domain_graph(dom: GridDomain) -> PGraph:
    """Domain cells plus resolved boundary nodes."""
    h = dom.h
    ids = dom.cell_ids.astype(np.int64)
    n_cells = dom.n_cells
    census = build_boundary_nodes(dom)
    node_v = np.full(len(census), -1, dtype=np.int64)
    extra = []
    nv = n_cells
    for node in census.resolved:
        node_v[node.id] = nv
        for c in sorted(node.approach):
            extra.append((nv, int(ids[c])))
        nv += 1
    edges = _lattice_edges(ids)
    if extra:
        edges = np.concatenate([edges, np.array(extra, dtype=np.int64)])
    vmeasure = np.zeros(nv)
    vmeasure[:n_cells] = h * h
    E = len(edges)
    return PGraph("domain", dom, nv, edges, np.full(E, h), np.full(E, h * h), vmeasure, ids, node_v)


@lru_cache(maxsize=8)
def ambient_graph(dom: GridDomain) -> PGraph:
    """Every cell of the bounding grid, including the complement of the domain."""
    h = dom.h
    ids = np.arange(dom.nx * dom.ny, dtype=np.int64).reshape(dom.shape)
    edges = _lattice_edges(ids)
    E = len(edges)
    n = dom.nx * dom.ny
    census = build_boundary_nodes(dom)
    return PGraph("ambient", dom, n, edges, np.full(E, h), np.full(E, h * h), np.full(n, h * h), ids,
                  np.full(len(census), -1, dtype=np.int64))
