"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 infeasible, 4 no convergence.
Set ``REACTIONMAP_THREADS`` to run restarts and pool scoring on threads.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bot_solver import default_workers, feasibility_check, solve
from .cost_field import Polyline, edge_cost, eval_cost, read_field
from .errors import InputError, ReactionMapError
from .export import bridge_report, sweep_table, solver_report, to_dot, write_solution
from .gaussian_bridge import graph_system, kl_monte_carlo, steer
from .hybrid_optimizer import HybridConfig, lambda_sweep
from .instance import ProblemInstance, marginals_from_dict
from .measures import (
    BalancedPair,
    measure_from_scores,
    read_roi_table,
    read_timeseries,
    scores_from_window,
    validate_balanced,
    write_measures,
)


def _fail(exc: ReactionMapError) -> int:
    print(json.dumps(exc.to_dict()), file=sys.stderr)
    return exc.exit_code


def cmd_estimate(args) -> int:
    if args.roi_table:
        tab = read_roi_table(args.roi_table)
        ids, pos, stim, react = tab["ids"], tab["positions"], tab["score_stim"], tab["score_react"]
    else:
        ts = read_timeseries(args.timeseries)
        if args.baseline_window:
            ts = ts.with_baseline_window(*args.baseline_window)
        ids, pos = list(ts.labels), ts.roi_positions
        stim = scores_from_window(ts, *args.stim_window, mode=args.mode)
        react = scores_from_window(ts, *args.react_window, mode=args.mode)
    pair = BalancedPair(
        measure_from_scores(stim, pos, args.mass, ids),
        measure_from_scores(react, pos, args.mass, ids),
    )
    write_measures(args.output, pair)
    rep = validate_balanced(pair)
    print(json.dumps({"output": str(args.output), "balanced": rep.passed, "mismatch": rep.mismatch}))
    return 0


def _solve_instance(inst: ProblemInstance, args):
    g = inst.graph()
    method = "oracle" if args.oracle else "local" if args.local else "auto"
    cfg = inst.solve_config(alpha=args.alpha, rng_seed=args.seed, restarts=args.restarts,
                            workers=default_workers())
    t0 = time.perf_counter()
    sol = solve(g, cfg, method)
    return g, cfg, sol, time.perf_counter() - t0


def cmd_solve(args) -> int:
    inst = ProblemInstance.load(args.instance)
    g, cfg, sol, wall = _solve_instance(inst, args)
    config = {**cfg.to_dict(), "method": "oracle" if args.oracle else "local" if args.local else "auto"}
    report = solver_report(g, sol, inst.canonical_hash(), config, wall)
    stem = args.stem or Path(args.instance).stem
    paths = write_solution(args.out_dir, stem, g, sol, report)
    print(json.dumps({"energy": sol.energy_value, "certificate": sol.certificate,
                      "support": report["support"], "files": {k: str(v) for k, v in paths.items()}}))
    return 0


def _marginals(inst: ProblemInstance, path):
    if path:
        return marginals_from_dict(json.loads(Path(path).read_text()))
    mp = inst.marginal_pair()
    if mp is None:
        raise InputError("no marginals: pass --marginals or add a marginals section")
    return mp


def cmd_bridge(args) -> int:
    inst = ProblemInstance.load(args.instance)
    g, cfg, sol, _ = _solve_instance(inst, args)
    params = inst.dynamics_params()
    marg = _marginals(inst, args.marginals)
    if marg.dim != g.n_vertices:
        raise InputError(f"marginals have dimension {marg.dim}, graph has {g.n_vertices} vertices")
    system = graph_system(g, sol.flow, params, marg.T, args.steps)
    bridge = steer(system, marg)
    mc = None
    if args.mc_paths:
        est, se = kl_monte_carlo(system, bridge.controls, marg.m0, marg.Sigma0, args.mc_paths, args.seed,
                                 gains=bridge.gains, means=bridge.means)
        mc = {"estimate": est, "stderr": se, "n_paths": args.mc_paths, "seed": args.seed,
              "z_score": (est - bridge.cost_total) / se if se > 0 else 0.0}
    rep = bridge_report(marg, args.steps, bridge, mc, inst.canonical_hash())
    rep["support"] = [g.edge_ids[e] for e in sol.support]
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(rep, indent=2) + "\n")
    print(json.dumps({"cost_total": bridge.cost_total, "output": str(out)}))
    return 0


def cmd_hybrid(args) -> int:
    inst = ProblemInstance.load(args.instance)
    g = inst.graph()
    cfg = HybridConfig(
        lam=0.0,
        solve_cfg=inst.solve_config(alpha=args.alpha, rng_seed=args.seed, restarts=args.restarts),
        dyn_params=inst.dynamics_params(),
        marginals=_marginals(inst, args.marginals),
        N_steps=args.steps,
        candidate_pool=args.pool,
    )
    lambdas = [float(x) for x in args.lambda_grid.split(",")]
    sols = lambda_sweep(g, cfg, lambdas, default_workers())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.stem or Path(args.instance).stem
    (out / f"{stem}.sweep.csv").write_text(sweep_table(g, sols))
    for s in sols:
        (out / f"{stem}.lambda_{s.lam:g}.dot").write_text(to_dot(g, s.flow, cfg.solve_cfg.alpha, f"{stem}_lambda_{s.lam:g}"))
    sys.stdout.write(sweep_table(g, sols))
    return 0


def cmd_cost_eval(args) -> int:
    if args.field:
        cf = read_field(args.field)
    else:
        cf = ProblemInstance.load(args.instance).cost_field()
        if cf is None:
            raise InputError("instance has no cost_field section")
    result: dict = {"variant": cf.variant, "bounds": list(cf.bounds)}
    if args.point is not None:
        tau = np.asarray(args.tangent, float)
        result["c"] = eval_cost(cf, args.point, tau / np.linalg.norm(tau) if args.normalize else tau)
    if args.path is not None:
        pts = np.asarray(args.path, float).reshape(-1, len(args.path) // args.path_points)
        result["beta"] = edge_cost(cf, Polyline(pts), args.n_sub)
    if args.instance and args.point is None and args.path is None:
        g = ProblemInstance.load(args.instance).graph(args.n_sub)
        result["edges"] = {eid: float(b) for eid, b in zip(g.edge_ids, g.beta)}
    print(json.dumps(result))
    return 0


def cmd_validate(args) -> int:
    inst = ProblemInstance.load(args.instance)
    g = inst.graph()
    rep = feasibility_check(g)
    out = {
        "instance_hash": inst.canonical_hash(),
        "vertices": g.n_vertices,
        "edges": g.n_edges,
        "total_mass": g.total_mass,
        "supply_sum": float(g.b.sum()),
        "non_injective_edges": [g.edge_ids[e] for e, p in enumerate(g.paths) if not p.is_injective()],
        "feasible": rep.feasible,
        "witness": [g.vertex_ids[v] for v in rep.witness],
    }
    print(json.dumps(out))
    return 0 if rep.feasible else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reactionmap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="build stimulus/reaction measures from ROI data")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--roi-table")
    src.add_argument("--timeseries")
    e.add_argument("--stim-window", nargs=2, type=float, metavar=("T0", "T1"))
    e.add_argument("--react-window", nargs=2, type=float, metavar=("T2", "T3"))
    e.add_argument("--baseline-window", nargs=2, type=float, metavar=("B0", "B1"))
    e.add_argument("--mode", choices=["positive_part", "absolute"], default="positive_part")
    e.add_argument("--mass", type=float, default=1.0)
    e.add_argument("-o", "--output", required=True)
    e.set_defaults(func=cmd_estimate)

    def solver_flags(q, seed_required=True):
        q.add_argument("instance")
        q.add_argument("--alpha", type=float)
        m = q.add_mutually_exclusive_group()
        m.add_argument("--oracle", action="store_true")
        m.add_argument("--local", action="store_true")
        q.add_argument("--seed", type=int, required=seed_required)
        q.add_argument("--restarts", type=int)

    s = sub.add_parser("solve", help="minimise the branched energy on an instance")
    solver_flags(s)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--stem")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bridge", help="bridge cost on the geometric minimiser")
    solver_flags(b)
    b.add_argument("--marginals")
    b.add_argument("--steps", type=int, default=100)
    b.add_argument("--mc-paths", type=int, default=0)
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_bridge)

    h = sub.add_parser("hybrid", help="hybrid objective over a lambda grid")
    h.add_argument("instance")
    h.add_argument("--lambda-grid", required=True)
    h.add_argument("--alpha", type=float)
    h.add_argument("--seed", type=int, required=True)
    h.add_argument("--restarts", type=int)
    h.add_argument("--marginals")
    h.add_argument("--steps", type=int, default=50)
    h.add_argument("--pool", type=int, default=16)
    h.add_argument("--out-dir", default=".")
    h.add_argument("--stem")
    h.set_defaults(func=cmd_hybrid)

    c = sub.add_parser("cost-eval", help="evaluate c(x, tau) or an edge cost")
    cs = c.add_mutually_exclusive_group(required=True)
    cs.add_argument("--field")
    cs.add_argument("--instance")
    c.add_argument("--point", nargs="+", type=float)
    c.add_argument("--tangent", nargs="+", type=float)
    c.add_argument("--normalize", action="store_true")
    c.add_argument("--path", nargs="+", type=float, help="flattened polyline coordinates")
    c.add_argument("--path-points", type=int, default=2)
    c.add_argument("--n-sub", type=int, default=16)
    c.set_defaults(func=cmd_cost_eval)

    v = sub.add_parser("validate", help="lint an instance file")
    v.add_argument("instance")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReactionMapError as exc:
        return _fail(exc)
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
