from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import annulus_capacity_radial
from pelab.domain import DomainSpec, generate
from pelab.graph import domain_graph
from pelab.pmin import ConvergenceError, SolverOptions
from pelab.prime_end import PrimeSet, pushforward
from pelab.sobolev_capacity import (CapacityProblem, GridFunction, ambient_capacity, annulus_zero_set, as_target,
                                    capacity, capacity_axioms_check, compare_capacities, dilate, disk, energy,
                                    prime_end_capacity)


def _blob(dom, center, r):
    return frozenset(c for c in disk(dom, center, r) if dom.is_inside(c))


def test_energy_of_constant(square33):
    u = GridFunction.constant(square33, 0.7)
    rep = energy(u, 3.0)
    assert rep.gradient_term == 0.0
    assert rep.lp_term == pytest.approx(0.7**3 * square33.n_cells * square33.h**2)


def test_energy_of_linear_function():
    d = generate(DomainSpec("square", {}, 1 / 64))
    g = domain_graph(d)
    x = np.empty(g.n)
    X, _ = d.centers()
    x[g.vertex_of_cell[d.mask]] = X[d.mask]
    from pelab.prime_end import build_boundary_nodes
    for n in build_boundary_nodes(d):
        x[g.vertex_of_node[n.id]] = n.anchor_xy[0]
    u = GridFunction.from_vector(g, x)
    assert energy(u, 2.0).gradient_term == pytest.approx(1.0, rel=0.05)


def test_energy_homogeneity(slit33):
    rng = np.random.default_rng(1)
    g = domain_graph(slit33)
    u = GridFunction.from_vector(g, rng.random(g.n))
    for p in (1.5, 2.0, 3.0):
        a, b = energy(u, p), energy(u.scale(2.0), p)
        assert b.lp_term == pytest.approx(2**p * a.lp_term)
        assert b.gradient_term == pytest.approx(2**p * a.gradient_term)
        assert a.norm(p) == pytest.approx(a.norm_p_power ** (1 / p))
    with pytest.raises(ValueError):
        energy(u, 1.0)


def test_problem_validation(square33):
    t = as_target(square33, [(5, 5)])
    with pytest.raises(ValueError, match="empty"):
        CapacityProblem(square33, PrimeSet(frozenset(), frozenset()), "prime_end_cp", 2.0)
    with pytest.raises(ValueError, match="kind"):
        CapacityProblem(square33, t, "newtonian", 2.0)
    with pytest.raises(ValueError, match="p must"):
        CapacityProblem(square33, t, "ambient_cp", 1.0)
    assert prime_end_capacity(square33, PrimeSet(frozenset(), frozenset()), 2.0) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_whole_domain_target(square33, p):
    cells = frozenset(tuple(c) for c in np.argwhere(square33.mask))
    res = capacity(CapacityProblem(square33, as_target(square33, cells), "prime_end_cp", p))
    assert res.value == pytest.approx(square33.n_cells * square33.h**2, rel=1e-12)
    assert np.allclose(res.minimizer.cell_values(), 1.0)


def test_annulus_capacity_against_oracles():
    d = generate(DomainSpec("square", {}, 1 / 128))
    res = ambient_capacity(d, disk(d, (0.5, 0.5), 0.25), 2.0, annulus_zero_set(d, (0.5, 0.5), 0.5))
    assert res.value == pytest.approx(annulus_capacity_radial(0.25, 0.5), rel=0.1)
    assert res.value == pytest.approx(2 * math.pi / math.log(2), rel=0.1)


def test_minimizer_in_unit_interval_and_p2_residual(comb33):
    E = [(0, j) for j in range(1, 16)]
    for p in (1.5, 2.0, 3.0):
        res = capacity(CapacityProblem(comb33, pushforward(comb33, E), "prime_end_cp", p))
        v = res.minimizer.cell_values()
        assert v.min() >= 0.0 and v.max() <= 1.0
        if p == 2.0:
            assert res.residual < 1e-10


def test_symmetry_invariance(square33):
    a = _blob(square33, (0.25, 0.5), 0.1)
    b = frozenset((32 - i, j) for i, j in a)
    c = frozenset((j, i) for i, j in a)
    for p in (1.5, 3.0):
        va = prime_end_capacity(square33, PrimeSet(a, frozenset()), p)
        for other in (b, c):
            assert prime_end_capacity(square33, PrimeSet(other, frozenset()), p) == pytest.approx(va, rel=1e-6)


def test_compare_capacities_blob_and_sliver(square33):
    rep = compare_capacities(square33, _blob(square33, (0.5, 0.5), 0.15), 2.0)
    assert rep["pushforward_holds"] and rep["pullback_holds"]
    assert rep["pushforward_slack"] >= 0
    far = compare_capacities(square33, {(0, 0)}, 2.0)
    assert far["cbar_pushforward"] == 0.0 and far["pushforward_holds"]


def test_axioms_examples(square33):
    inner = PrimeSet(_blob(square33, (0.5, 0.5), 0.1), frozenset())
    outer = PrimeSet(_blob(square33, (0.5, 0.5), 0.2), frozenset())
    left = PrimeSet(_blob(square33, (0.25, 0.5), 0.08), frozenset())
    right = PrimeSet(_blob(square33, (0.75, 0.5), 0.08), frozenset())
    rep = capacity_axioms_check(square33, [inner, outer], 2.0)
    assert rep["monotone_holds"] and rep["monotone"][0]["slack"] > 0
    rep = capacity_axioms_check(square33, [left, right], 2.0)
    assert rep["subadditive_holds"] and rep["subadditive_slack"] > 1e-6
    one = prime_end_capacity(square33, PrimeSet(frozenset({(9, 9)}), frozenset()), 2.0)
    assert one >= square33.h**2
    with pytest.raises(ValueError):
        capacity_axioms_check(square33, [left], 2.0)


def test_outer_capacity_of_dilations(square33):
    E = _blob(square33, (0.5, 0.5), 0.1)
    base = ambient_capacity(square33, E, 2.0).value
    vals = [ambient_capacity(square33, dilate(square33, E, r), 2.0).value for r in (0.1, 0.05, 0.02, 0.0)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(base, rel=1e-12)


def test_nonconvergence_carries_iterate(square33):
    with pytest.raises(ConvergenceError) as ei:
        ambient_capacity(square33, _blob(square33, (0.5, 0.5), 0.1), 3.0, opts=SolverOptions(max_iter=1))
    assert ei.value.best is not None and ei.value.iterations == 1


def test_result_json(square33):
    res = ambient_capacity(square33, {(16, 16)}, 2.0)
    assert set(res.to_json()) == {"kind", "p", "value", "iterations", "residual"}
