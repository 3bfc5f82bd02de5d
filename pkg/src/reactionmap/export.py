"""Reports and static exports: JSON reports, DOT graphs, CSV tables and SVG figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bot_solver import Solution
from .graph_core import EmbeddedGraph, positive_support


def _role(g: EmbeddedGraph, v: int) -> str:
    return "source" if g.b[v] > 0 else "sink" if g.b[v] < 0 else "relay"


def support_degrees(g: EmbeddedGraph, w) -> np.ndarray:
    deg = np.zeros(g.n_vertices, int)
    for e in positive_support(w):
        deg[g.tails[e]] += 1
        deg[g.heads[e]] += 1
    return deg


def solver_report(g: EmbeddedGraph, sol: Solution, instance_hash: str, config: dict, wall_time: float) -> dict:
    deg = support_degrees(g, sol.flow)
    return {
        "instance_hash": instance_hash,
        "config": config,
        "energy": sol.energy_value,
        "certificate": sol.certificate,
        "iterations": sol.iterations,
        "wall_time_s": wall_time,
        "support": [
            {
                "edge": g.edge_ids[e],
                "tail": g.vertex_ids[g.tails[e]],
                "head": g.vertex_ids[g.heads[e]],
                "w": float(sol.flow[e]),
                "beta": float(g.beta[e]),
            }
            for e in sol.support
        ],
        # vertices where flow merges or splits
        "hubs": [g.vertex_ids[v] for v in range(g.n_vertices) if deg[v] >= 3],
    }


def edge_table(g: EmbeddedGraph, w, alpha: float) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["edge", "tail", "head", "w", "beta", "w_alpha", "energy_term"])
    for e in positive_support(w):
        wa = float(w[e]) ** alpha
        out.writerow([g.edge_ids[e], g.vertex_ids[g.tails[e]], g.vertex_ids[g.heads[e]],
                      repr(float(w[e])), repr(float(g.beta[e])), repr(wa), repr(float(g.beta[e]) * wa)])
    return buf.getvalue()


def to_dot(g: EmbeddedGraph, w, alpha: float, name: str = "reaction_map") -> str:
    """DOT digraph of the positive support; pen width grows with ``w**alpha``."""
    supp = positive_support(w)
    top = max((float(w[e]) ** alpha for e in supp), default=1.0)
    lines = [f'digraph "{name}" {{', "  node [shape=circle];"]
    shapes = {"source": "doublecircle", "sink": "box", "relay": "circle"}
    for v in range(g.n_vertices):
        x = g.vertices[v]
        pos = f"{x[0]:.6g},{x[1]:.6g}!" if len(x) >= 2 else f"{x[0]:.6g},0!"
        lines.append(f'  "{g.vertex_ids[v]}" [shape={shapes[_role(g, v)]}, pos="{pos}", b="{g.b[v]:.6g}"];')
    for e in supp:
        pen = 1.0 + 4.0 * float(w[e]) ** alpha / top
        lines.append(
            f'  "{g.vertex_ids[g.tails[e]]}" -> "{g.vertex_ids[g.heads[e]]}" '
            f'[label="{float(w[e]):.6g}", penwidth={pen:.3f}, id="{g.edge_ids[e]}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_svg(g: EmbeddedGraph, w, alpha: float, size: int = 480, margin: int = 30) -> str:
    """Standalone SVG: vertices at their first two coordinates, stroke width ~ ``w**alpha``."""
    pts = [g.vertices[:, :2]] + [p.points[:, :2] for p in g.paths]
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    s = (size - 2 * margin) / span.max()

    def xy(p):
        return margin + (p[0] - lo[0]) * s, size - margin - (p[1] - lo[1]) * s

    supp = positive_support(w)
    top = max((float(w[e]) ** alpha for e in supp), default=1.0)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           '<rect width="100%" height="100%" fill="white"/>']
    for e in range(g.n_edges):
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in map(xy, g.paths[e].points))
        if e in supp:
            width = 1.0 + 7.0 * float(w[e]) ** alpha / top
            out.append(f'<polyline points="{d}" fill="none" stroke="#b22222" stroke-width="{width:.2f}"/>')
        else:
            out.append(f'<polyline points="{d}" fill="none" stroke="#cccccc" stroke-width="0.6"/>')
    colours = {"source": "#1f77b4", "sink": "#2ca02c", "relay": "#555555"}
    for v in range(g.n_vertices):
        cx, cy = xy(g.vertices[v])
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{colours[_role(g, v)]}"/>')
        out.append(f'<text x="{cx + 7:.2f}" y="{cy - 7:.2f}" font-size="11">{g.vertex_ids[v]}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_solution(out_dir, stem: str, g: EmbeddedGraph, sol: Solution, report: dict) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / f"{stem}.report.json",
        "dot": out / f"{stem}.dot",
        "edges": out / f"{stem}.edges.csv",
        "svg": out / f"{stem}.svg",
    }
    paths["report"].write_text(json.dumps(report, indent=2) + "\n")
    paths["dot"].write_text(to_dot(g, sol.flow, sol.alpha, stem))
    paths["edges"].write_text(edge_table(g, sol.flow, sol.alpha))
    paths["svg"].write_text(to_svg(g, sol.flow, sol.alpha))
    return paths


def sweep_table(g: EmbeddedGraph, sols: Sequence) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["lambda", "support", "E_alpha", "J_dyn", "F_lambda"])
    for s in sols:
        out.writerow([repr(float(s.lam)), ";".join(g.edge_ids[e] for e in s.support),
                      *(repr(float(v)) for v in (s.geometric_cost, s.dynamic_cost_value, s.total))])
    return buf.getvalue()


def read_sweep_table(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        for k in ("lambda", "E_alpha", "J_dyn", "F_lambda"):
            r[k] = float(r[k])
    return rows


def bridge_report(marginals, N: int, sol, mc: Optional[dict], instance_hash: str = "") -> dict:
    return {
        "instance_hash": instance_hash,
        "marginals": {"m0": marginals.m0.tolist(), "mT": marginals.mT.tolist(),
                      "Sigma0": marginals.Sigma0.tolist(), "SigmaT": marginals.SigmaT.tolist(), "T": marginals.T},
        "N": N,
        "cost_mean": sol.cost_mean,
        "cost_cov": sol.cost_cov,
        "cost_total": sol.cost_total,
        "terminal_mean_error": sol.mean_error,
        "terminal_cov_rel_error": sol.cov_error,
        "units": "nats",
        "monte_carlo": mc,
    }
