"""Regenerate the files under tests/fixtures deterministically.

Usage: python3 scripts/make_fixtures.py [--out tests/fixtures]
"""

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from reactionmap.bot_solver import oracle_solve
from reactionmap.cost_field import Grid, IsotropicCost, TensorCost, write_field
from reactionmap.gaussian_bridge import graph_system
from reactionmap.generators import random_library, tie_bridge_setup, tie_library
from reactionmap.graph_dynamics import DynamicsParams
from reactionmap.instance import instance_from_graph, marginals_to_dict


def dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def roi_tables(out: Path) -> None:
    (out / "roi_table.csv").write_text(
        "roi_id,x,y,score_stim,score_react\n"
        "V1,0.0,0.0,3,0\n"
        "PPC,1.0,0.5,1,1\n"
        "M1,2.0,0.0,0,3\n"
    )
    (out / "roi_zero.csv").write_text(
        "roi_id,x,y,score_stim,score_react\n"
        "V1,0.0,0.0,0,1\n"
        "M1,2.0,0.0,0,3\n"
    )
    t = np.round(np.arange(101) * 0.01, 10)
    lines = ["# time_step=0.01", "# t_start=0", "roi_id,x,y," + ",".join(f"t{k}" for k in range(len(t)))]
    lines.append("ramp,0.0,0.0," + ",".join(repr(float(v)) for v in t))
    lines.append("flat,1.0,0.0," + ",".join("1.0" for _ in t))
    (out / "ramp_timeseries.csv").write_text("\n".join(lines) + "\n")


def y_vs_v(out: Path) -> None:
    dump(out / "y_vs_v.json", {
        "format": "reactionmap-instance/1",
        "name": "y-vs-v",
        "domain": {"lo": [0, -1], "hi": [2, 1]},
        "vertices": [
            {"id": "s1", "x": [0, 1]},
            {"id": "s2", "x": [0, -1]},
            {"id": "t", "x": [2, 0]},
            {"id": "r", "x": [1, 0]},
        ],
        "edges": [
            {"id": "s1t", "tail": "s1", "head": "t"},
            {"id": "s2t", "tail": "s2", "head": "t"},
            {"id": "s1r", "tail": "s1", "head": "r"},
            {"id": "s2r", "tail": "s2", "head": "r"},
            {"id": "rt", "tail": "r", "head": "t"},
        ],
        "cost_field": {"variant": "constant", "c0": 1.0},
        "measures": {"source": {"s1": 0.5, "s2": 0.5}, "target": {"t": 1.0}},
        "solver": {"alpha": 0.5, "restarts": 8},
    })


def infeasible(out: Path) -> None:
    dump(out / "infeasible.json", {
        "format": "reactionmap-instance/1",
        "name": "unreachable sink",
        "vertices": [
            {"id": "s", "x": [0, 0], "b": 1.0},
            {"id": "a", "x": [1, 0], "b": -0.5},
            {"id": "b", "x": [2, 1], "b": 0.0},
            {"id": "t", "x": [3, 1], "b": -0.5},
        ],
        "edges": [
            {"id": "sa", "tail": "s", "head": "a", "beta": 1.0},
            {"id": "bt", "tail": "b", "head": "t", "beta": 1.0},
        ],
    })


def tie(out: Path) -> None:
    g = tie_library(0.1)
    params, marg = tie_bridge_setup()
    inst = instance_from_graph(
        g, "tie with a 0.1 detour on the r1 route",
        dynamics={"kappa": params.kappa, "beta_dyn": params.beta_dyn, "sigma0": params.sigma0, "sigma1": params.sigma1},
        marginals=marginals_to_dict(marg),
        solver={"alpha": 0.5},
    )
    inst.dump(out / "tie.json")


def scalar_bridge(out: Path) -> None:
    # one isolated vertex: A = -kappa, C = sigma0
    dump(out / "scalar_bridge.json", {
        "format": "reactionmap-instance/1",
        "name": "scalar mean steering",
        "vertices": [{"id": "x", "x": [0, 0], "b": 0.0}],
        "edges": [],
        "dynamics": {"kappa": 1.0, "beta_dyn": 1.0, "sigma0": 1.0, "sigma1": 0.0},
        "marginals": {"m0": [0.0], "mT": [1.0], "Sigma0": [[0.5]], "SigmaT": [[0.5]], "T": 1.0},
    })


def zero_steer(out: Path) -> None:
    rng = np.random.default_rng(2024)
    g = random_library(rng, 4, 6)
    while g.n_vertices != 4:
        g = random_library(rng, 4, 6)
    params = DynamicsParams(kappa=0.8, beta_dyn=1.3, sigma0=0.9, sigma1=0.4)
    w = oracle_solve(g, 0.5).flow
    sy = graph_system(g, w, params, 1.0, 100)
    Sig = solve_discrete_lyapunov(sy.A_d, sy.Q_d)
    m0 = np.array([1.0, -0.5, 0.25, 0.0])
    marg = {"m0": m0.tolist(), "mT": sy.propagate_mean(m0)[-1].tolist(),
            "Sigma0": Sig.tolist(), "SigmaT": Sig.tolist(), "T": 1.0}
    inst = instance_from_graph(g, "push-forward marginals", dynamics={
        "kappa": 0.8, "beta_dyn": 1.3, "sigma0": 0.9, "sigma1": 0.4}, marginals=marg, solver={"alpha": 0.5})
    inst.dump(out / "zero_steer.json")


def round_trip_corpus(out: Path) -> None:
    """Twenty instances exercising every section and edge form."""
    d = out / "roundtrip"
    d.mkdir(exist_ok=True)
    grid = Grid((5, 5), (0.25, 0.25), (0.0, 0.0))
    rng = np.random.default_rng(7)
    write_field(d / "iso.rmcf", IsotropicCost(grid, rng.uniform(0, 1, (5, 5)), 0.5, 2.0, ((0, 0), (1, 1))))
    B = rng.normal(size=(5, 5, 2, 2))
    write_field(d / "tensor.rmcf", TensorCost(grid, B @ np.swapaxes(B, -1, -2), 0.1, ((0, 0), (1, 1))))
    for i in range(20):
        g = random_library(np.random.default_rng(1000 + i), 6, 10)
        doc = json.loads(instance_from_graph(g, f"corpus {i}", bbox=((0, 0), (1, 1))).to_json())
        kind = i % 5
        if kind == 1:
            for e in doc["edges"]:
                e.pop("beta")
            doc["cost_field"] = {"file": "iso.rmcf"}
        elif kind == 2:
            for e in doc["edges"]:
                e.pop("beta")
            doc["cost_field"] = {"file": "tensor.rmcf"}
        elif kind == 3:
            src = {v["id"]: v["b"] for v in doc["vertices"] if v["b"] > 0}
            snk = {v["id"]: -v["b"] for v in doc["vertices"] if v["b"] < 0}
            for v in doc["vertices"]:
                v.pop("b")
            doc["measures"] = {"source": src, "target": snk}
        elif kind == 4:
            e = doc["edges"][0]
            tail = next(v["x"] for v in doc["vertices"] if v["id"] == e["tail"])
            head = next(v["x"] for v in doc["vertices"] if v["id"] == e["head"])
            mid = (np.asarray(tail) + np.asarray(head)) / 2
            e["points"] = [[mid[0] + 0.05, mid[1]]]
            n = len(doc["vertices"])
            doc["dynamics"] = {"kappa": 1.0, "beta_dyn": 0.5, "sigma0": 1.0, "sigma1": 0.2,
                               "B_stim": np.eye(n)[:, :1].tolist(),
                               "stimulus": {"times": [0, 0.5, 1], "values": [[0], [1], [0]]}}
            doc["marginals"] = {"m0": [0.0] * n, "mT": [0.5] * n, "Sigma0": np.eye(n).tolist(),
                                "SigmaT": (0.5 * np.eye(n)).tolist(), "T": 1.0}
        doc["solver"] = {"alpha": [0.3, 0.5, 0.8][i % 3], "restarts": 8}
        dump(d / f"case_{i:02d}.json", doc)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    out = Path(ap.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)
    for make in (roi_tables, y_vs_v, infeasible, tie, scalar_bridge, zero_steer, round_trip_corpus):
        make(out)
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
