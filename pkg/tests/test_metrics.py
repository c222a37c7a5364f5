from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy import ndimage

from oracles import min_connected_diameter, octile_dijkstra
from pelab.domain import DomainSpec, generate, neighborhood
from pelab.metrics import (ambient_distance, inner_distance, inner_distance_field, maz_neighborhood, maz_separation,
                           mazurkiewicz_distance)


def _connected8(cells):
    cells = np.array(sorted(cells))
    lo = cells.min(0)
    m = np.zeros(tuple(cells.max(0) - lo + 1), dtype=bool)
    m[tuple((cells - lo).T)] = True
    return ndimage.label(m, structure=np.ones((3, 3)))[1] == 1


def test_inner_distance_trivial(square33):
    c = (5, 7)
    assert inner_distance(square33, c, c) == 0.0


def test_inner_distance_axis_path():
    d = generate(DomainSpec("square", {}, 1 / 64))
    assert inner_distance(d, d.snap((0.25, 0.5)), d.snap((0.75, 0.5))) == pytest.approx(0.5, abs=1e-12)


def test_inner_distance_around_slit_matches_dijkstra(slit33):
    h = slit33.h
    x, y = slit33.snap((0.75, 0.5 + 2 * h)), slit33.snap((0.75, 0.5 - 2 * h))
    assert inner_distance(slit33, x, y) == pytest.approx(octile_dijkstra(slit33.mask, x, y) * h, abs=1e-12)
    assert ambient_distance(slit33, x, y) == pytest.approx(4 * h)


def test_inner_distance_around_slit_tends_to_half():
    # the removed tip cell and octile steps cost about 20% at h=1/32; see the decisions ledger
    d = generate(DomainSpec("slit", {}, 1 / 128))
    h = d.h
    assert inner_distance(d, d.snap((0.75, 0.5 + 2 * h)), d.snap((0.75, 0.5 - 2 * h))) == pytest.approx(0.5, rel=0.1)


def test_field_source_zero_and_symmetry(square33):
    f = inner_distance_field(square33, (16, 16))
    assert f[(16, 16)] == 0.0
    v = f.values
    inside = square33.mask
    assert np.allclose(np.where(inside, v, 0), np.where(inside, v[::-1, :], 0))
    assert np.allclose(np.where(inside, v, 0), np.where(inside, v.T, 0))
    assert f[(3, 9)] == pytest.approx(inner_distance(square33, (16, 16), (3, 9)))


def test_field_behind_more_teeth_is_farther():
    h = 1 / 144
    vals = []
    for T in (4, 8):
        d = generate(DomainSpec("comb", {"teeth": T}, h))
        f = inner_distance_field(d, d.snap((0.9, 0.75)))
        vals.append(f[d.snap((h, 0.25))])
    assert vals[1] > vals[0]


def test_maz_trivial_and_convex(square33):
    b = mazurkiewicz_distance(square33, (4, 4), (4, 4))
    assert b.lo == b.hi == 0.0
    x, y = (5, 6), (20, 14)
    b = mazurkiewicz_distance(square33, x, y)
    d = ambient_distance(square33, x, y)
    assert b.lo == pytest.approx(d, abs=1e-12)
    assert b.hi <= d + math.sqrt(2) * square33.h
    assert x in b.witness and y in b.witness and _connected8(b.witness)


def test_maz_rejects_nonpositive_tol(square33):
    with pytest.raises(ValueError, match="tol"):
        mazurkiewicz_distance(square33, (4, 4), (5, 5), tol=0.0)


def test_maz_slit_bracket_near_quarter():
    # grid value exceeds 0.25 by about one cell width; see the decisions ledger
    d = generate(DomainSpec("slit", {}, 1 / 64))
    h = d.h
    b = mazurkiewicz_distance(d, d.snap((0.75, 0.5 + 2 * h)), d.snap((0.75, 0.5 - 2 * h)))
    assert b.lo <= b.hi <= b.lo + 0.1
    assert abs(b.lo - 0.25) <= 2 * h


def test_maz_matches_exhaustive_on_small_slit():
    d = generate(DomainSpec("slit", {}, 1 / 8))
    cells = [tuple(int(t) for t in c) for c in np.argwhere(d.mask)]
    for x, y in itertools.islice(itertools.combinations(cells, 2), 0, None, 37):
        b = mazurkiewicz_distance(d, x, y)
        oracle = min_connected_diameter(d.mask, x, y) * d.h
        assert b.lo <= oracle + 1e-12
        assert abs(b.hi - oracle) <= math.sqrt(2) * d.h


def test_separation_examples(slit33, square33):
    A = {(20, 20), (21, 20)}
    assert maz_separation(square33, A, A) == 0.0
    assert maz_separation(square33, {(5, 5)}, {(5, 6)}) == 0.0
    h = slit33.h
    up = {slit33.snap((0.75, 0.5 + h))}
    down = {slit33.snap((0.75, 0.5 - h))}
    assert maz_separation(slit33, up, down) >= 0.2


def test_separation_annulus_rings():
    d = generate(DomainSpec("annulus", {"r_inner": 0.1, "r_outer": 0.5}, 1 / 32))
    X, Y = d.centers()
    R = np.hypot(X - 0.5, Y - 0.5)
    r1, r2 = 0.2, 0.35
    A = {tuple(c) for c in np.argwhere(d.mask & (np.abs(R - r1) < d.h / 2))}
    B = {tuple(c) for c in np.argwhere(d.mask & (np.abs(R - r2) < d.h / 2))}
    assert maz_separation(d, A, B) >= r2 - r1 - 2 * d.h


def test_maz_neighborhood_small_radius(slit33):
    A = {(10, 10), (11, 10)}
    assert maz_neighborhood(slit33, A, slit33.h / 3) == A


def test_maz_neighborhood_does_not_cross_slit(slit33):
    h = slit33.h
    A = {slit33.snap((0.75, 0.5 + h))}
    nb = maz_neighborhood(slit33, A, 0.25)
    below = {c for c in nb if c[1] < 16}
    assert not below
    assert any(c[1] < 16 for c in neighborhood(slit33, A, 0.25))


def test_maz_neighborhood_square_is_euclidean(square33):
    A = {(10, 12)}
    for r in (0.05, 0.13, 0.3):
        assert maz_neighborhood(square33, A, r) == {c for c in neighborhood(square33, A, r)
                                                   if ambient_distance(square33, (10, 12), c) < r}
