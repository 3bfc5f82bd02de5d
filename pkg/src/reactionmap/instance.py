"""Problem instance files.

An instance is one JSON document with named sections::

    {
      "format": "reactionmap-instance/1",
      "name": "...",
      "domain": {"lo": [..], "hi": [..]},
      "vertices": [{"id": "s", "x": [0, 1], "b": 0.5}, ...],
      "edges": [{"id": "e0", "tail": "s", "head": "t",
                 "points": [[..], ..],      # optional interior polyline points
                 "beta": 1.2}, ...],        # optional; integrated when absent
      "cost_field": {"variant": "constant", "c0": 1.0} | {"file": "field.rmcf"},
      "measures": {"source": {"s": 0.5}, "target": {"t": 0.5}},   # optional
      "dynamics": {"kappa": 1, "beta_dyn": 1, "sigma0": 1, "sigma1": 0,
                   "B_stim": [[..]], "stimulus": {"times": [..], "values": [[..]]}},
      "marginals": {"m0": [..], "mT": [..], "Sigma0": [[..]], "SigmaT": [[..]], "T": 1},
      "solver": {"alpha": 0.5, "restarts": 32, "max_iters": 1000, "tol": 1e-9}
    }

When ``measures`` is present the supply is ``b = source - target`` per vertex
id and any ``b`` given on vertices must agree with it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bot_solver import SolveConfig
from .cost_field import CostField, field_from_dict, read_field
from .errors import FormatError
from .gaussian_bridge import GaussianMarginalPair
from .graph_core import EmbeddedGraph
from .graph_dynamics import DynamicsParams

FORMAT = "reactionmap-instance/1"
SECTIONS = ("format", "name", "domain", "vertices", "edges", "cost_field", "measures", "dynamics", "marginals", "solver")


@dataclass
class ProblemInstance:
    doc: dict
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        self.doc = copy.deepcopy(self.doc)
        self.doc.setdefault("format", FORMAT)
        if self.doc["format"] != FORMAT:
            raise FormatError(f"unsupported instance format {self.doc['format']!r}")
        unknown = set(self.doc) - set(SECTIONS)
        if unknown:
            raise FormatError(f"unknown sections {sorted(unknown)}")
        for key in ("vertices", "edges"):
            if key not in self.doc:
                raise FormatError(f"instance lacks the {key!r} section")
        self._check_references()

    # --- io -------------------------------------------------------------------

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls(doc, path.parent)

    @classmethod
    def from_json(cls, text: str, base_dir=".") -> "ProblemInstance":
        return cls(json.loads(text), Path(base_dir))

    def to_json(self) -> str:
        ordered = {k: self.doc[k] for k in SECTIONS if k in self.doc}
        return json.dumps(ordered, indent=2) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json())

    def canonical(self) -> dict:
        """Order-free form: sorted keys, vertex and edge rows sorted by id, floats as floats."""
        doc = copy.deepcopy(self.doc)

        def norm(x):
            if isinstance(x, bool) or x is None or isinstance(x, str):
                return x
            if isinstance(x, (int, float)):
                return float(x)
            if isinstance(x, dict):
                return {str(k): norm(v) for k, v in x.items()}
            return [norm(v) for v in x]

        doc["vertices"] = sorted(doc["vertices"], key=lambda v: str(v["id"]))
        doc["edges"] = sorted(doc["edges"], key=lambda e: str(e["id"]))
        doc.pop("name", None)
        return norm(doc)

    def canonical_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # --- validation -------------------------------------------------------------

    def _check_references(self) -> None:
        vids = [str(v["id"]) for v in self.doc["vertices"]]
        if len(set(vids)) != len(vids):
            raise FormatError("duplicate vertex ids")
        eids = [str(e["id"]) for e in self.doc["edges"]]
        if len(set(eids)) != len(eids):
            raise FormatError("duplicate edge ids")
        known = set(vids)
        for e in self.doc["edges"]:
            for end in ("tail", "head"):
                if str(e[end]) not in known:
                    raise FormatError(f"edge {e['id']}: unknown {end} vertex {e[end]!r}")
            if str(e["tail"]) == str(e["head"]):
                raise FormatError(f"edge {e['id']} is a self-loop")
        meas = self.doc.get("measures")
        if meas:
            for side in ("source", "target"):
                for vid in meas.get(side, {}):
                    if str(vid) not in known:
                        raise FormatError(f"measures.{side} references unknown vertex {vid!r}")
        dim = {len(v["x"]) for v in self.doc["vertices"]}
        if len(dim) > 1:
            raise FormatError("vertices have mixed dimensions")

    @property
    def vertex_ids(self) -> list:
        return [str(v["id"]) for v in self.doc["vertices"]]

    @property
    def edge_ids(self) -> list:
        return [str(e["id"]) for e in self.doc["edges"]]

    def supply(self) -> np.ndarray:
        ids = self.vertex_ids
        given = np.array([float(v.get("b", 0.0)) for v in self.doc["vertices"]])
        meas = self.doc.get("measures")
        if not meas:
            return given
        idx = {v: i for i, v in enumerate(ids)}
        b = np.zeros(len(ids))
        for vid, m in meas.get("source", {}).items():
            b[idx[str(vid)]] += float(m)
        for vid, m in meas.get("target", {}).items():
            b[idx[str(vid)]] -= float(m)
        explicit = [i for i, v in enumerate(self.doc["vertices"]) if "b" in v]
        if explicit and np.abs(given[explicit] - b[explicit]).max() > 1e-12 * max(1.0, np.abs(b).max()):
            raise FormatError("vertex b values disagree with the measures section")
        return b

    # --- model objects -------------------------------------------------------------

    def cost_field(self) -> Optional[CostField]:
        spec = self.doc.get("cost_field")
        if not spec:
            return None
        if "file" in spec:
            return read_field(self.base_dir / spec["file"])
        return field_from_dict(spec)

    def graph(self, n_sub: int = 16) -> EmbeddedGraph:
        ids = self.vertex_ids
        idx = {v: i for i, v in enumerate(ids)}
        V = np.array([v["x"] for v in self.doc["vertices"]], float)
        edges, betas = [], []
        for e in self.doc["edges"]:
            edges.append((idx[str(e["tail"])], idx[str(e["head"])], e.get("points")))
            betas.append(e.get("beta"))
        cost = self.cost_field() if any(b is None for b in betas) else None
        if cost is None and any(b is None for b in betas):
            raise FormatError("edges without beta need a cost_field section")
        try:
            return EmbeddedGraph.build(V, edges, self.supply(), cost, betas, n_sub, ids, self.edge_ids)
        except ValueError as exc:
            raise FormatError(str(exc)) from None

    def solve_config(self, **overrides) -> SolveConfig:
        opts = dict(self.doc.get("solver", {}))
        opts.update({k: v for k, v in overrides.items() if v is not None})
        return SolveConfig(**opts)

    def dynamics_params(self) -> DynamicsParams:
        spec = dict(self.doc.get("dynamics", {}))
        stim = spec.pop("stimulus", None)
        B = spec.pop("B_stim", None)
        a = None
        if stim is not None:
            times = np.asarray(stim["times"], float)
            values = np.atleast_2d(np.asarray(stim["values"], float))
            if values.shape[0] != len(times):
                values = values.T

            def a(t, times=times, values=values):
                return np.array([np.interp(t, times, values[:, j]) for j in range(values.shape[1])])

        return DynamicsParams(B_stim=None if B is None else np.asarray(B, float), stimulus=a, **spec)

    def marginal_pair(self) -> Optional[GaussianMarginalPair]:
        spec = self.doc.get("marginals")
        if not spec:
            return None
        return marginals_from_dict(spec)


def marginals_from_dict(spec: dict) -> GaussianMarginalPair:
    return GaussianMarginalPair(spec["m0"], spec["mT"], spec["Sigma0"], spec["SigmaT"], spec.get("T", 1.0))


def marginals_to_dict(mp: GaussianMarginalPair) -> dict:
    return {"m0": mp.m0.tolist(), "mT": mp.mT.tolist(), "Sigma0": mp.Sigma0.tolist(),
            "SigmaT": mp.SigmaT.tolist(), "T": mp.T}


def instance_from_graph(g: EmbeddedGraph, name: str = "", bbox=None, **sections) -> ProblemInstance:
    """Serialise an in-memory graph (with its beta) as an instance document."""
    V = g.vertices
    lo = V.min(axis=0) if bbox is None else np.asarray(bbox[0])
    hi = V.max(axis=0) if bbox is None else np.asarray(bbox[1])
    doc = {
        "format": FORMAT,
        "name": name,
        "domain": {"lo": np.asarray(lo, float).tolist(), "hi": np.asarray(hi, float).tolist()},
        "vertices": [{"id": vid, "x": V[i].tolist(), "b": float(g.b[i])} for i, vid in enumerate(g.vertex_ids)],
        "edges": [],
    }
    for e, eid in enumerate(g.edge_ids):
        row = {"id": eid, "tail": g.vertex_ids[g.tails[e]], "head": g.vertex_ids[g.heads[e]], "beta": float(g.beta[e])}
        interior = g.paths[e].points[1:-1]
        if len(interior):
            row["points"] = interior.tolist()
        doc["edges"].append(row)
    doc.update({k: v for k, v in sections.items() if v is not None})
    return ProblemInstance(doc)
