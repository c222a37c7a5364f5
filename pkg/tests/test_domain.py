from __future__ import annotations

import json

import numpy as np
import pytest

from pelab.domain import (DisconnectedDomainError, DomainError, DomainSpec, GridDomain, cell_neighbors, comb_teeth,
                          generate, load_spec, neighborhood)


def test_square_h8_has_7x7_cells():
    d = generate(DomainSpec("square", {}, 1 / 8))
    assert d.n_cells == 49
    assert d.mask[1:-1, 1:-1].all()
    assert not d.mask[0].any() and not d.mask[-1].any()


def test_comb_cells_near_teeth_removed():
    h = 1 / 64
    d = generate(DomainSpec("comb", {"teeth": 4}, h))
    assert d.clipping == ()
    X, Y = d.centers()
    for n in range(2, 6):
        near = (np.abs(X - 1 / n) <= h / 2) & (Y <= 0.5)
        assert not d.mask[near].any()
    assert d.mask[d.snap((0.3, 0.75))]


def test_comb_h8_keeps_half_and_quarter():
    d = generate(DomainSpec("comb", {"teeth": 4}, 1 / 8))
    omitted = sorted(c["x"] for c in d.clipping)
    assert omitted == pytest.approx([1 / 5, 1 / 3])
    X, Y = d.centers()
    for x in (0.5, 0.25):
        assert not d.mask[np.isclose(X, x) & (Y > 0) & (Y <= 0.5)].any()


def test_comb_teeth_positions():
    assert [t[1] for t in comb_teeth(3)] == [1 / 2, 1 / 3, 1 / 4]


def test_slit_disconnects_rows():
    d = generate(DomainSpec("slit", {}, 1 / 32))
    j = 16
    assert not d.mask[16:, j].any()
    assert d.mask[15, j]


def test_double_comb_connected_and_unclipped():
    d = generate(DomainSpec("double_comb", {"teeth": 4}, 1 / 88))
    assert d.clipping == ()
    assert d.n_cells > 0


def test_disconnected_rejected_with_sizes():
    with pytest.raises(DisconnectedDomainError, match="21 and 21"):
        generate(DomainSpec("custom", {"segments": [[0.5, 0, 0.5, 1]]}, 1 / 8))


@pytest.mark.parametrize("spec, msg", [
    (DomainSpec("blob", {}, 0.1), "unknown kind"),
    (DomainSpec("square", {}, -1.0), "positive"),
    (DomainSpec("slit", {"start": (2, 0.5)}, 1 / 8), "outside"),
    (DomainSpec("annulus", {"r_inner": 0.5, "r_outer": 0.2}, 1 / 8), "radii"),
    (DomainSpec("comb", {"teeth": -2}, 1 / 8), "teeth"),
])
def test_invalid_specs(spec, msg):
    with pytest.raises(DomainError, match=msg):
        generate(spec)


def test_load_spec_reports_field():
    with pytest.raises(DomainError, match="'h'"):
        load_spec('{"kind": "square"}')
    with pytest.raises(DomainError, match="line 1"):
        load_spec('{"kind": ')


def test_generation_is_deterministic():
    a = generate(DomainSpec("comb", {"teeth": 8}, 1 / 64))
    b = generate(DomainSpec("comb", {"teeth": 8}, 1 / 64))
    assert a.fingerprint() == b.fingerprint()
    assert np.array_equal(a.mask, b.mask)


def test_json_round_trip(slit33):
    back = GridDomain.from_json(json.loads(json.dumps(slit33.to_json())))
    assert np.array_equal(back.mask, slit33.mask)
    assert back.fingerprint() == slit33.fingerprint()


def test_pbm_header(square33):
    text = square33.to_pbm()
    lines = text.splitlines()
    assert lines[0] == "P1" and lines[2] == "33 33"


def test_neighbors_interior_and_corner():
    d = generate(DomainSpec("square", {}, 1 / 8))
    assert len(cell_neighbors(d, (4, 4))) == 4
    assert len(cell_neighbors(d, (1, 1), connectivity=8)) == 3
    assert len(cell_neighbors(d, (1, 4), connectivity=8)) == 5
    assert len(cell_neighbors(d, (4, 4), connectivity=8)) == 8
    with pytest.raises(DomainError):
        cell_neighbors(d, (0, 0))


def test_neighbors_exclude_slit_side():
    d = generate(DomainSpec("slit", {}, 1 / 4))
    assert (2, 2) not in cell_neighbors(d, (2, 3))
    assert sorted(cell_neighbors(d, (1, 3))) == [(1, 2), (2, 3)]


def test_neighborhood_examples(square33, slit33):
    assert neighborhood(square33, {(5, 5)}, 0.0) == {(5, 5)}
    d = generate(DomainSpec("square", {}, 1 / 10))
    nb = neighborhood(d, {(5, 5)}, 1.5 / 10)
    assert nb == {(5 + i, 5 + j) for i in (-1, 0, 1) for j in (-1, 0, 1)}
    h = slit33.h
    above = slit33.snap((0.75, 0.5 + h))
    nb = neighborhood(slit33, {above}, 3 * h)
    assert any(c[1] < 16 for c in nb)
