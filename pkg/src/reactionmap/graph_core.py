"""Embedded weighted directed graphs, Kirchhoff balance and the branched energy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cost_field import DEFAULT_NSUB, CostField, Polyline, edge_cost
from .errors import LengthMismatch, NotAdmissible

SUPPORT_THRESHOLD = 1e-12
ADMISSIBLE_RTOL = 1e-9


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True, eq=False)
class EmbeddedGraph:
    """Finite library of oriented embedded edges with a vertex supply vector.

    ``b[v] > 0`` marks a stimulus source, ``b[v] < 0`` a reaction sink and
    ``b[v] == 0`` a relay. ``beta[e]`` is the line integral of the cost
    density along ``paths[e]``.
    """

    vertices: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    paths: tuple
    beta: np.ndarray
    b: np.ndarray
    vertex_ids: tuple = ()
    edge_ids: tuple = ()

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, float))
        tails = np.asarray(self.tails, dtype=int).reshape(-1)
        heads = np.asarray(self.heads, dtype=int).reshape(-1)
        beta = np.asarray(self.beta, float).reshape(-1)
        b = np.asarray(self.b, float).reshape(-1)
        n, m = len(V), len(tails)
        for name, obj in (("vertices", V), ("tails", tails)):
            object.__setattr__(self, name, obj)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.vertex_ids:
            object.__setattr__(self, "vertex_ids", tuple(str(i) for i in range(n)))
        if not self.edge_ids:
            object.__setattr__(self, "edge_ids", tuple(f"e{i}" for i in range(m)))
        if not (len(heads) == len(beta) == len(self.paths) == len(self.edge_ids) == m):
            raise LengthMismatch("edge arrays must all have one entry per edge")
        if len(b) != n or len(self.vertex_ids) != n:
            raise LengthMismatch("supply vector must have one entry per vertex")
        if m and (tails.min() < 0 or heads.min() < 0 or max(tails.max(), heads.max()) >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(tails == heads):
            raise ValueError("self-loops are not allowed")
        if np.any(beta <= 0):
            raise ValueError("edge costs beta must be positive")
        if abs(b.sum()) > 1e-10 * max(np.abs(b).sum(), 1e-300):
            raise ValueError(f"supply vector is unbalanced: sum(b) = {b.sum()!r}")
        for e, p in enumerate(self.paths):
            if np.linalg.norm(p.points[0] - V[tails[e]]) > 1e-9 or np.linalg.norm(p.points[-1] - V[heads[e]]) > 1e-9:
                raise ValueError(f"edge {self.edge_ids[e]} path does not join its endpoints")

    @classmethod
    def build(
        cls,
        vertices,
        edges: Sequence,
        b,
        cost: Optional[CostField] = None,
        beta=None,
        n_sub: int = DEFAULT_NSUB,
        vertex_ids: Sequence = (),
        edge_ids: Sequence = (),
    ) -> "EmbeddedGraph":
        """Assemble a graph from ``(tail, head)`` or ``(tail, head, interior_points)`` tuples.

        Straight segments are used when no interior points are given. Any
        entry of ``beta`` that is ``None`` (or all of them, if ``beta`` is
        omitted) is integrated from ``cost``.
        """
        V = np.atleast_2d(np.asarray(vertices, float))
        tails, heads, paths = [], [], []
        for e in edges:
            t, h = int(e[0]), int(e[1])
            interior = e[2] if len(e) > 2 and e[2] is not None else []
            pts = [V[t], *np.atleast_2d(np.asarray(interior, float)).reshape(-1, V.shape[1]), V[h]]
            tails.append(t)
            heads.append(h)
            paths.append(Polyline(np.array(pts)))
        given = [None] * len(paths) if beta is None else list(beta)
        betas = []
        for p, bv in zip(paths, given):
            if bv is None:
                if cost is None:
                    raise ValueError("edge cost missing and no cost field supplied")
                bv = edge_cost(cost, p, n_sub)
            betas.append(float(bv))
        return cls(V, np.array(tails, int), np.array(heads, int), tuple(paths), np.array(betas), b,
                   tuple(vertex_ids), tuple(edge_ids))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.tails)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([p.length for p in self.paths])

    @property
    def total_mass(self) -> float:
        return float(self.b[self.b > 0].sum())

    def with_beta(self, beta) -> "EmbeddedGraph":
        return EmbeddedGraph(self.vertices, self.tails, self.heads, self.paths, beta, self.b,
                             self.vertex_ids, self.edge_ids)


def as_flow(g: EmbeddedGraph, w) -> np.ndarray:
    w = np.asarray(w, float).reshape(-1)
    if len(w) != g.n_edges:
        raise LengthMismatch(f"flow has {len(w)} entries for {g.n_edges} edges")
    if np.any(w < 0):
        raise ValueError("flows must be nonnegative")
    return w


def incidence_matrix(g: EmbeddedGraph) -> np.ndarray:
    """Vertex-by-edge matrix with +1 at the tail and -1 at the head."""
    A = np.zeros((g.n_vertices, g.n_edges))
    cols = np.arange(g.n_edges)
    A[g.tails, cols] = 1.0
    A[g.heads, cols] = -1.0
    return A


def kirchhoff_residual(g: EmbeddedGraph, w) -> np.ndarray:
    """Net outflow minus supply at every vertex."""
    w = np.asarray(w, float).reshape(-1)
    if len(w) != g.n_edges:
        raise LengthMismatch(f"flow has {len(w)} entries for {g.n_edges} edges")
    r = -g.b.copy()
    np.add.at(r, g.tails, w)
    np.subtract.at(r, g.heads, w)
    return r


def admissible_tol(g: EmbeddedGraph) -> float:
    return ADMISSIBLE_RTOL * max(1.0, float(np.abs(g.b).max(initial=0.0)))


def is_admissible(g: EmbeddedGraph, w, tol: Optional[float] = None) -> bool:
    w = np.asarray(w, float)
    tol = admissible_tol(g) if tol is None else tol
    return bool(np.all(w >= 0) and np.abs(kirchhoff_residual(g, w)).max(initial=0.0) <= tol)


def energy(g: EmbeddedGraph, w, alpha: float) -> float:
    """Branched transport energy ``sum_e beta_e * w_e**alpha`` (with ``0**alpha = 0``)."""
    return energy_from_beta(g.beta, w, alpha)


def energy_from_beta(beta, w, alpha: float) -> float:
    w = np.asarray(w, float)
    pos = w > 0
    return float(np.dot(np.asarray(beta)[pos], w[pos] ** alpha))


def positive_support(w, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
    return np.flatnonzero(np.asarray(w) > threshold)


def find_directed_cycle(g: EmbeddedGraph, w, threshold: float = SUPPORT_THRESHOLD) -> Optional[list]:
    """Edge indices of one directed cycle in the positive support, or None."""
    out: list = [[] for _ in range(g.n_vertices)]
    for e in positive_support(w, threshold):
        out[g.tails[e]].append(e)
    color = [0] * g.n_vertices  # 0 new, 1 on stack, 2 done
    for root in range(g.n_vertices):
        if color[root]:
            continue
        color[root] = 1
        stack = [(root, iter(out[root]))]
        via: list = []
        while stack:
            v, it = stack[-1]
            e = next(it, None)
            if e is None:
                color[v] = 2
                stack.pop()
                if via:
                    via.pop()
                continue
            u = int(g.heads[e])
            if color[u] == 1:
                # back edge closes a cycle: walk the stack down to u
                cyc = [e]
                for (x, _), ein in zip(reversed(stack), reversed(via)):
                    if x == u:
                        break
                    cyc.append(ein)
                return cyc[::-1]
            if color[u] == 0:
                color[u] = 1
                stack.append((u, iter(out[u])))
                via.append(e)
    return None


def is_acyclic(g: EmbeddedGraph, w, threshold: float = SUPPORT_THRESHOLD) -> bool:
    return find_directed_cycle(g, w, threshold) is None


def remove_cycles(g: EmbeddedGraph, w, check: bool = True) -> np.ndarray:
    """Cancel directed cycles in the positive support of an admissible flow.

    Each pass subtracts the smallest flow on a cycle from every edge of that
    cycle, zeroing at least one edge, so at most ``n_edges`` passes occur.
    The energy never increases and Kirchhoff balance is preserved.
    """
    w = as_flow(g, w).copy()
    if check and not is_admissible(g, w):
        raise NotAdmissible("remove_cycles needs a Kirchhoff-admissible flow")
    for _ in range(g.n_edges + 1):
        cyc = find_directed_cycle(g, w)
        if cyc is None:
            return w
        eps = w[cyc].min()
        for e in cyc:
            w[e] = 0.0 if w[e] - eps <= 1e-14 * max(1.0, eps) else w[e] - eps
    raise AssertionError("cycle cancellation did not terminate")
