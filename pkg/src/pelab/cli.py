"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 trend-assertion failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import artifacts as A
from .domain import KINDS, DomainError, DomainSpec, GridDomain, generate, load_spec
from .experiments import NAMES, TrendFailure, left_edge, left_lower_edge, run_experiment
from .metrics import inner_distance, inner_distance_field, mazurkiewicz_distance
from .pmin import ConvergenceError, InfeasibleError, SolverOptions
from .prime_end import build_boundary_nodes, pushforward
from .sobolev_capacity import ambient_capacity, annulus_zero_set, as_target, capacity, CapacityProblem, disk
from .solver import (DegenerateBoundaryError, DirichletProblem, ObstacleProblem, RuleError, compile_rule, node_data,
                     perron_gap, solve_dirichlet, solve_obstacle)

log = logging.getLogger("pelab")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_TREND = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: Path
    seed: int
    log_level: str
    args: argparse.Namespace

    def __post_init__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        probe = self.out / ".pelab-write-test"
        try:
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {self.out} is not writable: {exc}") from None


# -------------------------------------------------------------- parsing

def _point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return x, y


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_domain_args(sp: argparse.ArgumentParser):
    g = sp.add_argument_group("domain")
    g.add_argument("--domain", type=Path, help="domain spec JSON or a domain.json written by 'gen'")
    g.add_argument("--kind", choices=KINDS, help="named domain family")
    g.add_argument("--h", type=float, default=1.0 / 32, help="cell size (default 1/32)")
    g.add_argument("--teeth", type=int, help="teeth count for comb and double_comb")


def _add_solver_args(sp: argparse.ArgumentParser):
    sp.add_argument("--p", type=float, default=2.0, help="exponent p > 1")
    sp.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)
    sp.add_argument("--rtol", type=float, default=SolverOptions.rel_energy_tol, help="relative energy tolerance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pelab", description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="seed for probe jitter; recorded in every artifact")
    ap.add_argument("--log", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="generate a domain and write its mask")
    _add_domain_args(sp)
    sp.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                    help="extra generator parameter, e.g. start=[0.5,0.5]")

    sp = sub.add_parser("metric", help="inner or Mazurkiewicz distances")
    _add_domain_args(sp)
    sp.add_argument("--from", dest="src", type=_point, required=True)
    sp.add_argument("--to", dest="dst", type=_point)
    sp.add_argument("--maz", action="store_true", help="report the Mazurkiewicz bracket")
    sp.add_argument("--tol", type=float, help="witness step for the upper bound (default h/2)")

    sp = sub.add_parser("boundary", help="boundary node census")
    _add_domain_args(sp)

    sp = sub.add_parser("solve", help="p-harmonic Dirichlet or obstacle solve")
    _add_domain_args(sp)
    _add_solver_args(sp)
    sp.add_argument("--data", required=True, help="data rule in x, y, ax, ay (nan leaves a node free)")
    sp.add_argument("--obstacle", help="obstacle rule in x, y on cells")
    sp.add_argument("--perron", action="store_true", help="also report the Perron envelope gap")

    sp = sub.add_parser("capacity", help="ambient or prime-end capacity")
    _add_domain_args(sp)
    _add_solver_args(sp)
    sp.add_argument("--cap", dest="cap_kind", choices=["ambient", "prime_end"], default="prime_end")
    sp.add_argument("--target", required=True,
                    help="left_edge, left_lower_edge, or disk:CX,CY,R (ambient cells, pushed forward for prime_end)")
    sp.add_argument("--zero-outside", type=float, metavar="R",
                    help="hold cells at distance >= R from the disk centre at 0 (ambient condenser)")

    sp = sub.add_parser("experiment", help="canned sweeps")
    sp.add_argument("name", choices=NAMES)
    _add_solver_args(sp)
    sp.add_argument("--teeth", type=_int_list, help="teeth counts, e.g. 4,8,16")
    sp.add_argument("--h", type=float, default=1.0 / 32, help="cell size for the slit experiment")
    sp.add_argument("--jitter", action="store_true", help="jitter probes by up to h/2 using --seed")
    sp.add_argument("--no-heatmaps", action="store_true")
    return ap


# ------------------------------------------------------------ commands

def _domain(args) -> GridDomain:
    if args.domain is not None:
        try:
            text = args.domain.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.domain}: {exc}") from None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.domain}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
        if isinstance(obj, dict) and "mask" in obj:
            return GridDomain.from_json(obj)
        return generate(load_spec(text))
    if args.kind is None:
        raise ConfigError("either --domain or --kind is required")
    params = {}
    if args.teeth is not None:
        params["teeth"] = args.teeth
    for kv in getattr(args, "param", []):
        key, _, val = kv.partition("=")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            raise ConfigError(f"--param {key}: value {val!r} is not JSON") from None
    return generate(DomainSpec(args.kind, params, args.h))


def _opts(args) -> SolverOptions:
    return SolverOptions(rel_energy_tol=args.rtol, max_iter=args.max_iter)


def _cell(dom: GridDomain, pt) -> tuple[int, int]:
    (x0, y0), h = dom.origin, dom.h
    if not (x0 <= pt[0] <= x0 + dom.nx * h and y0 <= pt[1] <= y0 + dom.ny * h):
        raise ConfigError(f"point {pt[0]:g},{pt[1]:g} lies outside the domain grid")
    try:
        return dom.snap(pt)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def cmd_gen(cfg: RunConfig) -> int:
    dom = _domain(cfg.args)
    meta = A.metadata(dom.h, None, cfg.seed)
    A.write_json(cfg.out / "domain.json", {"meta": meta, **dom.to_json()})
    A.write_text(cfg.out / "mask.pbm", dom.to_pbm())
    A.write_json(cfg.out / "clipping.json", {"meta": meta, "kind": dom.kind, "n_cells": dom.n_cells,
                                             "omitted": list(dom.clipping)})
    print(f"{dom.kind}: {dom.nx}x{dom.ny} grid, {dom.n_cells} cells, {len(dom.clipping)} features clipped")
    return EXIT_OK


def cmd_metric(cfg: RunConfig) -> int:
    a = cfg.args
    dom = _domain(a)
    x = _cell(dom, a.src)
    meta = A.metadata(dom.h, None, cfg.seed, tol=a.tol)
    if a.dst is None:
        fld = inner_distance_field(dom, x)
        A.write_text(cfg.out / "distance_field.csv", "# " + json.dumps(meta, sort_keys=True) + "\n" + fld.to_csv())
        return EXIT_OK
    y = _cell(dom, a.dst)
    rep = {"meta": meta, "from": list(x), "to": list(y), "inner_distance": inner_distance(dom, x, y)}
    if a.maz:
        rep["maz"] = mazurkiewicz_distance(dom, x, y, a.tol).to_json()
    A.write_json(cfg.out / "metric.json", rep)
    print(json.dumps(A._clean({k: v for k, v in rep.items() if k != "meta"}), sort_keys=True))
    return EXIT_OK


def cmd_boundary(cfg: RunConfig) -> int:
    dom = _domain(cfg.args)
    census = build_boundary_nodes(dom)
    meta = A.metadata(dom.h, None, cfg.seed)
    A.write_json(cfg.out / "nodes.json", {"meta": meta, "nodes": census.to_json()})
    print(f"{len(census)} nodes, {len(census.unresolved)} unresolved")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    a = cfg.args
    dom = _domain(a)
    opts = _opts(a)
    prob = DirichletProblem(dom, node_data(dom, a.data), a.p, opts)
    if a.obstacle:
        rule = compile_rule(a.obstacle)
        X, Y = dom.centers()
        psi = np.full(dom.shape, np.nan)
        for i, j in np.argwhere(dom.mask):
            psi[i, j] = rule(float(X[i, j]), float(Y[i, j]))
        u = solve_obstacle(ObstacleProblem(prob, psi))
    else:
        u = solve_dirichlet(prob)
    meta = A.metadata(dom.h, a.p, cfg.seed, opts, data_rule=a.data, obstacle_rule=a.obstacle)
    A.write_text(cfg.out / "solution.csv", "# " + json.dumps(A._clean(meta), sort_keys=True) + "\n" + u.to_csv())
    A.write_text(cfg.out / "solution.svg", A.svg_heatmap(u.values, f"solution p={a.p:g}", meta=meta))
    rep = {"meta": meta, "min": float(np.nanmin(u.values)), "max": float(np.nanmax(u.values))}
    if a.perron:
        rep["perron"] = perron_gap(prob).to_json()
    A.write_json(cfg.out / "solve.json", rep)
    return EXIT_OK


def _target_cells(dom: GridDomain, spec: str) -> tuple[frozenset, tuple | None]:
    if spec == "left_edge":
        return left_edge(dom), None
    if spec == "left_lower_edge":
        return left_lower_edge(dom), None
    if spec.startswith("disk:"):
        try:
            cx, cy, r = (float(t) for t in spec[5:].split(","))
        except ValueError:
            raise ConfigError(f"--target disk expects disk:CX,CY,R, got {spec!r}") from None
        return disk(dom, (cx, cy), r), (cx, cy)
    raise ConfigError(f"unknown --target {spec!r}; expected left_edge, left_lower_edge or disk:CX,CY,R")


def cmd_capacity(cfg: RunConfig) -> int:
    a = cfg.args
    dom = _domain(a)
    opts = _opts(a)
    cells, center = _target_cells(dom, a.target)
    if not cells:
        raise ConfigError(f"target {a.target!r} contains no cells")
    if a.cap_kind == "ambient":
        zero = ()
        if a.zero_outside is not None:
            if center is None:
                raise ConfigError("--zero-outside needs a disk target")
            zero = annulus_zero_set(dom, center, a.zero_outside)
        res = ambient_capacity(dom, cells, a.p, zero, opts)
    else:
        target = pushforward(dom, cells)
        if target.is_empty():
            value = {"kind": "prime_end_cp", "p": a.p, "value": 0.0, "iterations": 0, "residual": 0.0}
            res = None
        else:
            res = capacity(CapacityProblem(dom, target, "prime_end_cp", a.p, opts=opts))
    out = res.to_json() if res is not None else value
    meta = A.metadata(dom.h, a.p, cfg.seed, opts, target=a.target, zero_outside=a.zero_outside)
    A.write_json(cfg.out / "capacity.json", {"meta": meta, **out})
    print(json.dumps(A._clean(out), sort_keys=True))
    return EXIT_OK


def cmd_experiment(cfg: RunConfig) -> int:
    a = cfg.args
    kw = dict(p=a.p, out=cfg.out, seed=cfg.seed, opts=_opts(a))
    if a.name == "slit":
        kw["h"] = a.h
    else:
        kw.update(teeth=a.teeth, jitter=a.jitter, heatmaps=not a.no_heatmaps)
    res = run_experiment(a.name, **kw)
    for f in res.files:
        print(f)
    if not res.ok:
        raise TrendFailure(res.failures)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "metric": cmd_metric, "boundary": cmd_boundary, "solve": cmd_solve,
            "capacity": cmd_capacity, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.command, args.out, args.seed, args.log, args)
        return COMMANDS[args.command](cfg)
    except TrendFailure as exc:
        print(f"pelab: {exc}", file=sys.stderr)
        return EXIT_TREND
    except ConvergenceError as exc:
        print(f"pelab: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, DomainError, RuleError, DegenerateBoundaryError, InfeasibleError, ValueError) as exc:
        print(f"pelab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
