"""Canned resolution sweeps: harmonic comb, double comb and the slit square."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import artifacts as A
from .domain import DomainSpec, GridDomain, generate
from .metrics import mazurkiewicz_distance
from .pmin import SolverOptions
from .prime_end import build_boundary_nodes
from .solver import DirichletProblem, SweepMember, node_data, perron_gap, perturbation_experiment, solve_dirichlet

log = logging.getLogger(__name__)

NAMES = ("comb", "double_comb", "slit")
SLIT_SIDE_DATA = "(1 if ay > y else (0 if ay < y else nan)) if (abs(y - 0.5) < 1e-9 and x >= 0.5) else nan"


class TrendFailure(AssertionError):
    def __init__(self, columns: list[str]):
        super().__init__("trend assertions failed: " + ", ".join(columns))
        self.columns = columns


def matched_resolution(kind: str, teeth: int, step: int = 8, limit: int = 4096) -> int:
    """Smallest N (a multiple of ``step``) at which no tooth is clipped at h = 1/N."""
    for N in range(step, limit + 1, step):
        if not generate(DomainSpec(kind, {"teeth": teeth}, 1.0 / N)).clipping:
            return N
    raise ValueError(f"no resolution up to 1/{limit} keeps all {teeth} teeth of the {kind}")


def left_lower_edge(dom: GridDomain) -> frozenset:
    """Frame cells on ``x = 0`` with ``y < 1/2``."""
    y0, h = dom.origin[1], dom.h
    return frozenset((0, j) for j in range(dom.ny) if y0 + j * h < 0.5 - 1e-12)


def left_edge(dom: GridDomain) -> frozenset:
    return frozenset((0, j) for j in range(dom.ny))


@dataclass(frozen=True)
class SweepSpec:
    name: str
    kind: str
    teeth: tuple
    data_rule: str
    region: Callable[[GridDomain], frozenset]
    probes: tuple = ((0.5, 0.75), (0.5, 0.25))


SWEEPS = {
    "comb": SweepSpec("comb", "comb", (4, 8, 16), "y", left_lower_edge),
    "double_comb": SweepSpec("double_comb", "double_comb", (4, 8, 16), "0", left_edge),
}


@dataclass
class ExperimentResult:
    name: str
    report: dict
    ok: bool
    failures: list = field(default_factory=list)
    files: list = field(default_factory=list)


def _jittered(probes, h, rng):
    return tuple((x + rng.uniform(-h / 2, h / 2), y + rng.uniform(-h / 2, h / 2)) for x, y in probes)


def run_sweep(name: str, p: float = 2.0, teeth: tuple | None = None, out: Path | None = None, seed: int = 0,
              jitter: bool = False, opts: SolverOptions | None = None, heatmaps: bool = True) -> ExperimentResult:
    """Perturbation sweep over teeth counts at matched resolutions.

    Writes ``<name>_p<p>_report.json``, ``<name>_p<p>_gaps.csv`` and one
    heatmap of ``|u_f - u_{f+chi_E}|`` per member when ``out`` is given.
    """
    spec = SWEEPS[name]
    opts = opts or SolverOptions()
    teeth = tuple(teeth or spec.teeth)
    rng = np.random.default_rng(seed)
    members, Ns = [], []
    for T in teeth:
        N = matched_resolution(spec.kind, T)
        dom = generate(DomainSpec(spec.kind, {"teeth": T}, 1.0 / N))
        members.append(SweepMember(f"T{T}", dom, spec.region(dom)))
        Ns.append(N)
    probes = spec.probes
    if jitter:
        probes = _jittered(probes, max(m.dom.h for m in members), rng)
    t0 = time.perf_counter()
    rep = perturbation_experiment(members, spec.data_rule, p, probes, opts, keep_fields=heatmaps and out is not None)
    elapsed = time.perf_counter() - t0
    trends = rep.detail["trends"]
    failures = [k for k, v in trends.items() if not v]
    meta = A.metadata([m.dom.h for m in members], p, seed, opts, experiment=name, teeth=list(teeth), N=Ns,
                      data_rule=spec.data_rule, probes=[list(q) for q in probes])
    report = {"meta": meta, "table": rep.perturbation_gaps, "trends": trends, "ok": not failures}
    log.info("%s sweep p=%s finished in %.1fs; trends %s", name, p, elapsed, trends)
    files = []
    if out is not None:
        stem = f"{name}_p{p:g}"
        files.append(A.write_json(out / f"{stem}_report.json", report))
        header = ["member", "teeth", "N", "h", "n_cells", "perturbed_nodes"] + \
                 [f"gap_probe{k}" for k in range(len(probes))] + ["max_gap", "cbar_PE", "cp_E"]
        rows = [[r["member"], T, N, r["h"], r["n_cells"], r["perturbed_nodes"], *r["gaps"], r["max_gap"],
                 r["cbar_PE"], r["cp_E"]] for r, T, N in zip(rep.perturbation_gaps, teeth, Ns)]
        files.append(A.write_csv(out / f"{stem}_gaps.csv", header, rows, meta))
        for m, fld in zip(members, rep.fields):
            svg = A.svg_heatmap(np.abs(fld.values), f"{name} {m.label} p={p:g} |u_f - u_f+chi_E|", log_floor=-16,
                                meta={**meta, "member": m.label, "h": m.dom.h})
            files.append(A.write_text(out / f"{stem}_{m.label}_gap.svg", svg))
    return ExperimentResult(name, report, not failures, failures, files)


def slit_anchor_counts(dom: GridDomain, start=(0.5, 0.5), end=(1.0, 0.5)) -> list[dict]:
    """Node counts at the removed cells along a horizontal slit, from the tip outwards."""
    census = build_boundary_nodes(dom)
    h = dom.h
    j = int(round((start[1] - dom.origin[1]) / h))
    rows = []
    for i in range(dom.nx):
        x = dom.origin[0] + i * h
        if x < start[0] - 1e-12 or x > end[0] + 1e-12 or dom.mask[i, j]:
            continue
        nodes = census.at((i, j))
        rows.append({"anchor": [i, j], "x": x, "distance_from_tip": x - start[0],
                     "nodes": len(nodes), "resolved": sum(1 for n in nodes if n.resolved)})
    return rows


def run_slit(p: float = 2.0, h: float = 1.0 / 32, out: Path | None = None, seed: int = 0,
             opts: SolverOptions | None = None) -> ExperimentResult:
    """Node census along the slit and a solve with independent data on the two sides."""
    opts = opts or SolverOptions()
    dom = generate(DomainSpec("slit", {}, h))
    rows = slit_anchor_counts(dom)
    tip = rows[0]
    interior = [r for r in rows if r["distance_from_tip"] >= 3 * h - 1e-12 and r["anchor"][0] < dom.nx - 1]
    data = node_data(dom, SLIT_SIDE_DATA)
    u = solve_dirichlet(DirichletProblem(dom, data, p, opts))
    above, below = u.at((0.75, 0.5 + 2 * h)), u.at((0.75, 0.5 - 2 * h))
    perron = perron_gap(DirichletProblem(dom, node_data(dom, "y"), p, opts))
    bracket = mazurkiewicz_distance(dom, dom.snap((0.75, 0.5 + 2 * h)), dom.snap((0.75, 0.5 - 2 * h)))
    checks = {
        "tip_single_node": tip["nodes"] == 1,
        "interior_two_nodes": all(r["nodes"] == 2 and r["resolved"] == 2 for r in interior),
        "upper_probe_above_0.9": above > 0.9,
        "lower_probe_below_0.1": below < 0.1,
    }
    failures = [k for k, v in checks.items() if not v]
    meta = A.metadata(h, p, seed, opts, experiment="slit", data_rule=SLIT_SIDE_DATA)
    report = {"meta": meta, "census": rows, "probes": {"above": above, "below": below},
              "perron": perron.to_json(), "maz_bracket": bracket.to_json(), "checks": checks, "ok": not failures}
    files = []
    if out is not None:
        stem = f"slit_p{p:g}"
        files.append(A.write_json(out / f"{stem}_report.json", report))
        files.append(A.write_csv(out / f"{stem}_census.csv", ["i", "j", "x", "nodes", "resolved"],
                                 [[*r["anchor"], r["x"], r["nodes"], r["resolved"]] for r in rows], meta))
        files.append(A.write_text(out / f"{stem}_solution.svg",
                                  A.svg_heatmap(u.values, f"slit p={p:g} side data", meta=meta)))
    return ExperimentResult("slit", report, not failures, failures, files)


def run_experiment(name: str, **kw) -> ExperimentResult:
    if name not in NAMES:
        raise ValueError(f"unknown experiment {name!r}; expected one of {', '.join(NAMES)}")
    if name == "slit":
        kw.pop("teeth", None)
        kw.pop("jitter", None)
        kw.pop("heatmaps", None)
        return run_slit(**kw)
    return run_sweep(name, **kw)
