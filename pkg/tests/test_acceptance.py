"""Acceptance criteria 1-10.

Each criterion writes its artifacts under one directory per run and records
a PASS/FAIL line (printed in the terminal summary).  Criterion 10 repeats
criteria 1-9 with the same seed into a second directory and compares bytes.
"""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import all_pairs, min_connected_diameter, obstacle_1d
from pelab import artifacts as A
from pelab.domain import DomainSpec, generate
from pelab.experiments import SLIT_SIDE_DATA, left_lower_edge, run_slit, run_sweep
from pelab.metrics import inner_distance, mazurkiewicz_distance
from pelab.prime_end import PrimeSet, pushforward
from pelab.sobolev_capacity import (ambient_capacity, annulus_zero_set, capacity_axioms_check, compare_capacities,
                                    disk)
from pelab.solver import DirichletProblem, ObstacleProblem, node_data, solve_dirichlet, solve_obstacle

SEED = 20240611
TOL6 = 1e-6


def _cells(dom):
    return [tuple(int(t) for t in c) for c in np.argwhere(dom.mask)]


def crit1(out: Path, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rows, ok = [], True
    for kind, params in (("square", {}), ("slit", {}), ("comb", {"teeth": 4})):
        dom = generate(DomainSpec(kind, params, 1 / 64))
        h, cells = dom.h, _cells(dom)
        for _ in range(100):
            a, b = rng.choice(len(cells), 2, replace=False)
            x, y = cells[a], cells[b]
            d = h * math.hypot(x[0] - y[0], x[1] - y[1])
            br = mazurkiewicz_distance(dom, x, y)
            dinn = inner_distance(dom, x, y)
            good = d - 2 * h <= br.lo <= br.hi <= dinn + 2 * h and br.hi <= 2 * br.lo + 2 * h
            ok &= good
            rows.append([kind, *x, *y, d, br.lo, br.hi, dinn, int(good)])
    A.write_csv(out / "crit1_metric_chain.csv", ["fixture", "xi", "xj", "yi", "yj", "d", "lo", "hi", "d_inn", "ok"],
                rows, A.metadata(1 / 64, None, seed))
    return {"ok": ok, "detail": f"{len(rows)} pairs"}


def crit2(out: Path, seed: int) -> dict:
    dom = generate(DomainSpec("slit", {}, 1 / 8))
    diag = math.sqrt(2) * dom.h
    worst, rows = 0.0, []
    for x, y in all_pairs(dom.mask):
        oracle = min_connected_diameter(dom.mask, x, y) * dom.h
        hi = mazurkiewicz_distance(dom, x, y).hi
        worst = max(worst, abs(hi - oracle))
        rows.append([*x, *y, oracle, hi])
    A.write_csv(out / "crit2_maz_oracle.csv", ["xi", "xj", "yi", "yj", "oracle", "hi"], rows,
                A.metadata(dom.h, None, seed))
    return {"ok": worst <= diag, "detail": f"{len(rows)} pairs, worst |hi - oracle| = {worst:.3g}"}


def crit3(out: Path, seed: int) -> dict:
    res = run_slit(2.0, 1 / 32, out, seed)
    pr = res.report["probes"]
    return {"ok": res.ok, "detail": f"above {pr['above']:.4f}, below {pr['below']:.4f}; failed {res.failures}"}


def crit4(out: Path, seed: int) -> dict:
    sq = generate(DomainSpec("square", {}, 1 / 32))
    u = solve_dirichlet(DirichletProblem(sq, node_data(sq, "x"), 2.0))
    X, _ = sq.centers()
    errs = {"square_p2": float(np.nanmax(np.abs(u.values - X)))}
    h = 1 / 32
    strip = generate(DomainSpec("custom", {"box": [0, 0, 1, 2 * h]}, h))
    Xs, _ = strip.centers()
    ends = f"0 if x < {h / 2!r} else (1 if x > {1 - h / 2!r} else nan)"
    for p in (1.5, 3.0):
        v = solve_dirichlet(DirichletProblem(strip, node_data(strip, ends), p))
        errs[f"strip_p{p:g}"] = float(np.nanmax(np.abs(v.values - Xs)))
    A.write_json(out / "crit4_exactness.json", {"meta": A.metadata(h, None, seed), "errors": errs})
    ok = errs["square_p2"] <= 1e-9 and errs["strip_p1.5"] <= 1e-7 and errs["strip_p3"] <= 1e-7
    return {"ok": ok, "detail": ", ".join(f"{k} {v:.2g}" for k, v in errs.items())}


def crit5(out: Path, seed: int) -> dict:
    h = 1 / 10
    dom = generate(DomainSpec("custom", {"box": [0, 0, 1, 2 * h]}, h))
    X, _ = dom.centers()
    psi = np.where(dom.mask, 0.9 - 3 * (X - 0.5) ** 2, np.nan)
    base = DirichletProblem(dom, node_data(dom, "0 if x < 0.05 else (1 if x > 0.95 else nan)"), 2.0)
    u = solve_obstacle(ObstacleProblem(base, psi))
    ref = obstacle_1d(9, 0.0, 1.0, psi[1:10, 1])
    err = float(np.max(np.abs(u.values[1:10, 1] - ref)))
    A.write_json(out / "crit5_obstacle.json", {"meta": A.metadata(h, 2.0, seed), "solver": u.values[1:10, 1],
                                               "oracle": ref, "max_error": err})
    return {"ok": err <= 1e-8, "detail": f"max error {err:.2g}"}


def _crit6_sets(dom):
    def blob(c, r):
        return frozenset(x for x in disk(dom, c, r) if dom.is_inside(x))

    small, big = blob((0.3, 0.3), 0.08), blob((0.3, 0.3), 0.16)
    edge = pushforward(dom, left_lower_edge(dom))
    far = PrimeSet(blob((0.75, 0.75), 0.08), frozenset())
    sets = [PrimeSet(small, frozenset()), PrimeSet(big, frozenset()), edge, edge | far, far]
    ambient = {"blob": big, "left_lower_edge": left_lower_edge(dom),
               "edge_and_blob": left_lower_edge(dom) | small}
    if dom.kind == "slit":
        ambient["slit"] = frozenset(c for c in map(tuple, dom.boundary_cells()) if c[1] == dom.ny // 2)
    return sets, ambient


def crit6(out: Path, seed: int) -> dict:
    fixtures = {"square": generate(DomainSpec("square", {}, 1 / 32)),
                "slit": generate(DomainSpec("slit", {}, 1 / 32)),
                "comb": generate(DomainSpec("comb", {"teeth": 4}, 1 / 32))}
    report, ok, worst = {}, True, math.inf
    for name, dom in fixtures.items():
        sets, ambient = _crit6_sets(dom)
        for p in (1.5, 2.0, 3.0):
            ax = capacity_axioms_check(dom, sets, p, TOL6)
            cmp = {k: compare_capacities(dom, E, p, TOL6) for k, E in ambient.items()}
            good = ax["monotone_holds"] and ax["subadditive_holds"] and ax["measure_holds"] and \
                all(c["pushforward_holds"] and c["pullback_holds"] for c in cmp.values())
            slacks = [m["slack"] for m in ax["monotone"]] + [ax["subadditive_slack"]] + \
                [m["slack"] for m in ax["measure"]] + \
                [s for c in cmp.values() for s in (c["pushforward_slack"], c["pullback_slack"])]
            worst = min(worst, min(slacks))
            ok &= good
            report[f"{name}_p{p:g}"] = {"axioms": ax, "inequalities": cmp, "ok": good}
    A.write_json(out / "crit6_capacity.json", {"meta": A.metadata(1 / 32, [1.5, 2.0, 3.0], seed), **report})
    return {"ok": ok, "detail": f"least slack {worst:.3g}"}


def crit7(out: Path, seed: int) -> dict:
    from oracles import annulus_capacity_radial

    dom = generate(DomainSpec("square", {}, 1 / 128))
    c = (0.5, 0.5)
    val = ambient_capacity(dom, disk(dom, c, 0.25), 2.0, annulus_zero_set(dom, c, 0.5)).value
    ref = annulus_capacity_radial(0.25, 0.5)
    rel = abs(val - ref) / ref
    A.write_json(out / "crit7_annulus.json", {"meta": A.metadata(dom.h, 2.0, seed), "grid": val, "oracle": ref,
                                              "relative_error": rel, "log_formula": 2 * math.pi / math.log(2)})
    return {"ok": rel < 0.1, "detail": f"grid {val:.4f}, oracle {ref:.4f}, rel {rel:.3f}"}


def crit8(out: Path, seed: int) -> dict:
    res = run_sweep("comb", 2.0, (4, 8, 16), out, seed)
    return {"ok": res.ok, "detail": f"trends {res.report['trends']}"}


def crit9(out: Path, seed: int) -> dict:
    ok, parts = True, []
    for p in (2.0, 3.0):
        res = run_sweep("double_comb", p, (4, 8, 16), out, seed)
        ok &= res.ok
        parts.append(f"p={p:g} failed {res.failures}" if res.failures else f"p={p:g} all trends hold")
    return {"ok": ok, "detail": "; ".join(parts)}


CRITERIA = {
    1: ("metric chain", crit1, 30),
    2: ("Mazurkiewicz oracle", crit2, 120),
    3: ("slit doubling", crit3, 10),
    4: ("Dirichlet exactness", crit4, 5),
    5: ("obstacle oracle", crit5, 1),
    6: ("capacity axioms and inequalities", crit6, 120),
    7: ("annulus capacity", crit7, 60),
    8: ("comb stability sweep", crit8, 300),
    9: ("double-comb sweep", crit9, 300),
}


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return {"first": tmp_path_factory.mktemp("accept_a"), "second": tmp_path_factory.mktemp("accept_b"),
            "done": set()}


def _run(k: int, out: Path):
    name, fn, budget = CRITERIA[k]
    t0 = time.perf_counter()
    res = fn(out, SEED)
    dt = time.perf_counter() - t0
    return res, dt, budget


@pytest.mark.parametrize("k", [pytest.param(k, marks=pytest.mark.slow) if k in (8, 9) else k for k in sorted(CRITERIA)])
def test_criterion(k, runs, acceptance_log):
    name, _, _ = CRITERIA[k]
    res, dt, budget = _run(k, runs["first"])
    runs["done"].add(k)
    within = dt < budget
    passed = res["ok"] and within
    acceptance_log(f"{'PASS' if passed else 'FAIL'} criterion {k} ({name}): {res['detail']}; "
                   f"{dt:.1f}s (budget {budget}s)")
    assert res["ok"], res["detail"]
    assert within, f"took {dt:.1f}s, budget {budget}s"


@pytest.mark.slow
def test_criterion_10_determinism(runs, acceptance_log):
    t0 = time.perf_counter()
    for k in sorted(CRITERIA):
        if k not in runs["done"]:
            _run(k, runs["first"])
        _run(k, runs["second"])
    a, b = runs["first"], runs["second"]
    names = sorted(p.name for p in a.iterdir())
    differ = [n for n in names if not (b / n).exists() or (a / n).read_bytes() != (b / n).read_bytes()]
    extra = sorted(set(p.name for p in b.iterdir()) - set(names))
    ok = not differ and not extra and bool(names)
    acceptance_log(f"{'PASS' if ok else 'FAIL'} criterion 10 (determinism): {len(names)} artifacts compared, "
                   f"{len(differ) + len(extra)} differ; {time.perf_counter() - t0:.1f}s")
    assert ok, differ + extra
