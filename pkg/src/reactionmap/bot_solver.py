"""Minimisers of the branched energy on a finite edge library.

The objective ``sum_e beta_e * w_e**alpha`` is concave on the flow polytope
``{A w = b, w >= 0}``, so its minimum sits at a vertex of the polytope, and
vertices are exactly the flows whose positive support is an undirected forest.

* :func:`oracle_solve` enumerates forest supports and is exact.
* :func:`local_search` moves between forest flows by cycle pivots and keeps
  the best of several starts.
"""

from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable, Optional

import networkx as nx
import numpy as np
from scipy.optimize import linprog, nnls

from .errors import Infeasible, TooLarge
from .graph_core import (
    EmbeddedGraph,
    admissible_tol,
    check_alpha,
    energy,
    incidence_matrix,
    is_acyclic,
    kirchhoff_residual,
    positive_support,
    remove_cycles,
)

ORACLE_GUARD = 10**7


@dataclass
class SolveConfig:
    alpha: float = 0.5
    max_support: Optional[int] = None
    restarts: int = 32
    max_iters: int = 1000
    tol: float = 1e-9
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Solution:
    flow: np.ndarray
    energy_value: float
    support: tuple
    certificate: str
    iterations: int
    alpha: float = 0.5
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    residual: float
    witness: tuple = ()
    cut: tuple = ()


def default_workers() -> int:
    return max(1, int(os.environ.get("REACTIONMAP_THREADS", "1")))


# --- forest flows ------------------------------------------------------------


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def is_forest(g: EmbeddedGraph, edges) -> bool:
    uf = _UnionFind(g.n_vertices)
    return all(uf.union(int(g.tails[e]), int(g.heads[e])) for e in edges)


def forest_flow(g: EmbeddedGraph, edges, tol: float = 1e-9) -> Optional[np.ndarray]:
    """Solve ``A_S w_S = b`` on a forest support by leaf elimination.

    Leaf elimination is a direct factorisation of the reduced incidence
    system with no fill. Returns None when the system is inconsistent or
    the solution is negative beyond ``tol``; entries within ``tol`` of zero
    are clamped to exactly zero.
    """
    n = g.n_vertices
    excess = g.b.astype(float).copy()
    inc: list = [[] for _ in range(n)]
    for e in edges:
        inc[g.tails[e]].append(e)
        inc[g.heads[e]].append(e)
    deg = [len(x) for x in inc]
    alive = {int(e) for e in edges}
    w = np.zeros(g.n_edges)
    leaves = deque(v for v in range(n) if deg[v] == 1)
    while leaves:
        v = leaves.popleft()
        if deg[v] != 1:
            continue
        e = next(x for x in inc[v] if x in alive)
        alive.discard(e)
        t, h = int(g.tails[e]), int(g.heads[e])
        if t == v:
            w[e] = excess[v]
            excess[h] += w[e]
            other = h
        else:
            w[e] = -excess[v]
            excess[t] -= w[e]
            other = t
        excess[v] = 0.0
        deg[v] -= 1
        deg[other] -= 1
        if deg[other] == 1:
            leaves.append(other)
    if alive:
        return None  # not a forest
    scale = admissible_tol(g)
    if np.abs(excess).max(initial=0.0) > scale:
        return None
    if w.min(initial=0.0) < -tol:
        return None
    w[np.abs(w) <= tol] = 0.0
    return w


def _component_check(g: EmbeddedGraph, edges) -> bool:
    """Cheap necessary test: every forest component balances and covers all active vertices."""
    uf = _UnionFind(g.n_vertices)
    touched = set()
    for e in edges:
        t, h = int(g.tails[e]), int(g.heads[e])
        if not uf.union(t, h):
            return False
        touched.add(t)
        touched.add(h)
    active = np.flatnonzero(g.b != 0)
    if any(int(v) not in touched for v in active):
        return False
    sums: dict = {}
    for v in touched:
        r = uf.find(v)
        sums[r] = sums.get(r, 0.0) + g.b[v]
    tol = admissible_tol(g)
    if any(abs(s) > tol for s in sums.values()):
        return False
    # a relay leaf would carry zero flow; the smaller support is enumerated anyway
    deg: dict = {}
    for e in edges:
        for v in (int(g.tails[e]), int(g.heads[e])):
            deg[v] = deg.get(v, 0) + 1
    return all(not (d == 1 and g.b[v] == 0) for v, d in deg.items())


def _better(e_new: float, s_new: tuple, e_old: float, s_old: tuple, tol: float) -> bool:
    if e_new < e_old - tol:
        return True
    return abs(e_new - e_old) <= tol and s_new < s_old


def _max_support(g: EmbeddedGraph, cfg: SolveConfig) -> int:
    k = min(g.n_edges, max(g.n_vertices - 1, 0))
    if cfg.max_support is not None:
        if cfg.max_support > g.n_edges:
            raise ValueError("max_support cannot exceed the number of edges")
        k = min(k, cfg.max_support)
    return k


def enumerate_forest_flows(g: EmbeddedGraph, cfg: SolveConfig) -> list:
    """All distinct admissible forest flows with support size <= max_support.

    Returns ``(support, flow)`` pairs, support sorted, deduplicated on the
    positive support.
    """
    k = _max_support(g, cfg)
    if math.comb(g.n_edges, k) > ORACLE_GUARD:
        raise TooLarge(f"C({g.n_edges}, {k}) exceeds the enumeration guard {ORACLE_GUARD}")
    if not np.any(g.b != 0):
        return [((), np.zeros(g.n_edges))]
    seen: dict = {}
    for size in range(1, k + 1):
        for subset in combinations(range(g.n_edges), size):
            if not _component_check(g, subset):
                continue
            w = forest_flow(g, subset, cfg.tol)
            if w is None:
                continue
            supp = tuple(int(e) for e in positive_support(w))
            seen.setdefault(supp, w)
    return sorted(seen.items())


def _make_solution(g, w, alpha, certificate, iterations, extras=None) -> Solution:
    return Solution(
        flow=w,
        energy_value=energy(g, w, alpha),
        support=tuple(int(e) for e in positive_support(w)),
        certificate=certificate,
        iterations=iterations,
        alpha=alpha,
        extras=extras or {},
    )


def oracle_solve(g: EmbeddedGraph, alpha: Optional[float] = None, cfg: Optional[SolveConfig] = None) -> Solution:
    """Exact minimiser by enumeration of forest supports."""
    cfg = cfg or SolveConfig()
    alpha = check_alpha(cfg.alpha if alpha is None else alpha)
    candidates = enumerate_forest_flows(g, cfg)
    if not candidates:
        rep = feasibility_check(g)
        raise Infeasible("no admissible forest flow on this library", rep.witness)
    best = None
    for supp, w in candidates:
        E = energy(g, w, alpha)
        if best is None or _better(E, supp, best[0], best[1], cfg.tol):
            best = (E, supp, w)
    return _make_solution(g, best[2], alpha, "oracle_exact", len(candidates))


# --- feasibility ---------------------------------------------------------------


def feasibility_check(g: EmbeddedGraph, tol: float = 1e-9) -> FeasibilityReport:
    """Decide whether ``A w = b, w >= 0`` has a solution.

    The decision is a nonnegative least-squares residual. When infeasible, a
    min cut of the uncapacitated transshipment network supplies the witness:
    the sinks left on the far side of the cut.
    """
    A = incidence_matrix(g)
    if g.n_edges:
        _, res = nnls(A, g.b)
    else:
        res = float(np.linalg.norm(g.b))
    scale = max(1.0, float(np.abs(g.b).max(initial=0.0)))
    if res <= tol * scale:
        return FeasibilityReport(True, float(res))
    net = nx.DiGraph()
    net.add_nodes_from(["S", "T"])
    for v in range(g.n_vertices):
        net.add_node(v)
        if g.b[v] > 0:
            net.add_edge("S", v, capacity=float(g.b[v]))
        elif g.b[v] < 0:
            net.add_edge(v, "T", capacity=float(-g.b[v]))
    for t, h in zip(g.tails, g.heads):
        net.add_edge(int(t), int(h))  # no capacity attribute: unbounded
    _, (s_side, t_side) = nx.minimum_cut(net, "S", "T")
    witness = tuple(sorted(v for v in t_side if v != "T" and g.b[v] < 0))
    cut = tuple(sorted(v for v in s_side if v != "S"))
    return FeasibilityReport(False, float(res), witness, cut)


# --- pivot moves -----------------------------------------------------------------


def _forest_adjacency(g: EmbeddedGraph, support) -> list:
    adj: list = [[] for _ in range(g.n_vertices)]
    for e in support:
        t, h = int(g.tails[e]), int(g.heads[e])
        adj[t].append((h, e))
        adj[h].append((t, e))
    return adj


def _tree_path(g: EmbeddedGraph, adj: list, src: int, dst: int) -> Optional[list]:
    """Edges with traversal signs on the unique forest path src -> dst."""
    prev = {src: None}
    q = deque([src])
    while q:
        x = q.popleft()
        if x == dst:
            break
        for y, e in adj[x]:
            if y not in prev:
                prev[y] = (x, e)
                q.append(y)
    if dst not in prev:
        return None
    path = []
    y = dst
    while prev[y] is not None:
        x, e = prev[y]
        path.append((e, 1.0 if int(g.tails[e]) == x else -1.0))
        y = x
    return path[::-1]


def _residual_path(g: EmbeddedGraph, w: np.ndarray, support: set, src: int, dst: int, skip: int) -> Optional[list]:
    """0-1 BFS for a residual path: support edges either way (cost 0), others forward (cost 1)."""
    arcs: list = [[] for _ in range(g.n_vertices)]
    for e in range(g.n_edges):
        if e == skip:
            continue
        t, h = int(g.tails[e]), int(g.heads[e])
        if e in support:
            arcs[t].append((h, e, 1.0, 0))
            arcs[h].append((t, e, -1.0, 0))
        else:
            arcs[t].append((h, e, 1.0, 1))
    dist = {src: 0}
    prev: dict = {src: None}
    dq = deque([src])
    while dq:
        x = dq.popleft()
        for y, e, sgn, c in arcs[x]:
            nd = dist[x] + c
            if nd < dist.get(y, math.inf):
                dist[y] = nd
                prev[y] = (x, e, sgn)
                (dq.appendleft if c == 0 else dq.append)(y)
    if dst not in prev:
        return None
    path = []
    y = dst
    while prev[y] is not None:
        x, e, sgn = prev[y]
        path.append((e, sgn))
        y = x
    return path[::-1]


def _push(w: np.ndarray, cycle: list) -> Optional[np.ndarray]:
    """Push the largest feasible amount around a signed cycle, or None if unbounded."""
    back = [e for e, s in cycle if s < 0]
    if not back:
        return None
    t = min(w[e] for e in back)
    if t <= 0:
        return None
    new = w.copy()
    for e, s in cycle:
        new[e] += s * t
    for e in back:
        if new[e] <= 1e-14 * max(1.0, t):
            new[e] = 0.0
    return new


def _undirected_cycle(g: EmbeddedGraph, support) -> Optional[list]:
    uf = _UnionFind(g.n_vertices)
    kept = []
    for e in support:
        t, h = int(g.tails[e]), int(g.heads[e])
        if not uf.union(t, h):
            path = _tree_path(g, _forest_adjacency(g, kept), h, t)
            return [(int(e), 1.0)] + path
        kept.append(int(e))
    return None


def to_forest(g: EmbeddedGraph, w, objective: Callable) -> np.ndarray:
    """Shrink the support of an admissible flow until it is a forest.

    Along each undirected cycle the flow is moved to whichever end of its
    feasible segment has the lower objective; for a concave objective this
    never increases it.
    """
    w = np.asarray(w, float).copy()
    for _ in range(g.n_edges + 1):
        cyc = _undirected_cycle(g, positive_support(w))
        if cyc is None:
            return w
        options = [x for x in (_push(w, cyc), _push(w, [(e, -s) for e, s in cyc])) if x is not None]
        w = min(options, key=objective)
    raise AssertionError("support reduction did not terminate")


def _polish(g: EmbeddedGraph, w: np.ndarray, tol: float) -> np.ndarray:
    exact = forest_flow(g, positive_support(w), tol)
    return w if exact is None else exact


def _neighbours(g: EmbeddedGraph, w: np.ndarray, objective: Callable, tol: float):
    """Yield ``(objective, flow)`` for every single-pivot move from ``w``."""
    support = set(int(e) for e in positive_support(w))
    adj = _forest_adjacency(g, support)
    for e in range(g.n_edges):
        if e in support:
            continue
        t, h = int(g.tails[e]), int(g.heads[e])
        path = _tree_path(g, adj, h, t)
        if path is None:
            path = _residual_path(g, w, support, h, t, e)
            if path is None:
                continue
        new = _push(w, [(e, 1.0)] + path)
        if new is None:
            continue
        new = _polish(g, to_forest(g, new, objective), tol)
        yield objective(new), new


def pivot_descent(
    g: EmbeddedGraph,
    w0: np.ndarray,
    objective: Callable,
    tol: float = 1e-9,
    max_iters: int = 1000,
    escape: bool = True,
) -> tuple[np.ndarray, int, list]:
    """Best-improvement cycle-pivot search from an admissible forest flow.

    A move adds one off-support edge ``e``, closes a cycle through it (the
    forest path when ``e`` joins one tree, otherwise a residual path) and
    pushes flow until a support edge empties. Moves are accepted only when
    the objective drops by more than ``tol``. When no single move improves
    and ``escape`` is set, pairs of moves are tried; this is what lets two
    separate routes merge into a shared trunk. Returns the final flow, the
    number of accepted moves and the objective trace.
    """
    w = _polish(g, to_forest(g, w0, objective), tol)
    f = objective(w)
    trace = [f]
    it = 0
    while it < max_iters:
        best = None
        for fn, new in _neighbours(g, w, objective, tol):
            if fn < f - tol and (best is None or fn < best[0]):
                best = (fn, new)
        if best is None and escape:
            for _, mid in _neighbours(g, w, objective, tol):
                for fn, new in _neighbours(g, mid, objective, tol):
                    if fn < f - tol and (best is None or fn < best[0]):
                        best = (fn, new)
        if best is None:
            break
        f, w = best
        trace.append(f)
        it += 1
    return w, it, trace


def random_vertex_flow(g: EmbeddedGraph, rng: np.random.Generator, costs=None) -> np.ndarray:
    """A vertex of the flow polytope: the simplex optimum for random positive costs."""
    c = rng.exponential(1.0, g.n_edges) if costs is None else np.asarray(costs, float)
    res = linprog(c, A_eq=incidence_matrix(g), b_eq=g.b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        rep = feasibility_check(g)
        raise Infeasible("no admissible flow on this library", rep.witness)
    w = np.maximum(res.x, 0.0)
    return w


def _start_flow(g: EmbeddedGraph, cfg: SolveConfig, r: int) -> np.ndarray:
    if r == 0:
        # the linear min-cost flow: the limit of the branched problem as alpha -> 1
        return random_vertex_flow(g, np.random.default_rng(cfg.rng_seed), g.beta)
    return random_vertex_flow(g, np.random.default_rng([cfg.rng_seed, r]))


def local_optima(g: EmbeddedGraph, cfg: SolveConfig, objective: Optional[Callable] = None) -> list:
    """Run every restart; return ``(flow, objective, moves)`` per start, in start order."""
    alpha = cfg.alpha
    objective = objective or (lambda w: energy(g, w, alpha))
    rep = feasibility_check(g)
    if not rep.feasible:
        raise Infeasible("no admissible flow on this library", rep.witness)
    if not np.any(g.b != 0):
        return [(np.zeros(g.n_edges), 0.0, 0)]

    def run(r):
        w0 = _start_flow(g, cfg, r)
        w, moves, trace = pivot_descent(g, w0, objective, cfg.tol, cfg.max_iters)
        w = remove_cycles(g, w, check=False)
        return w, objective(w), moves

    workers = cfg.workers or 1
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, range(cfg.restarts)))
    return [run(r) for r in range(cfg.restarts)]


def local_search(g: EmbeddedGraph, alpha: Optional[float] = None, cfg: Optional[SolveConfig] = None) -> Solution:
    """Multi-start pivot search; certificate ``local_optimum``."""
    cfg = cfg or SolveConfig()
    if alpha is not None:
        cfg = SolveConfig(**{**cfg.to_dict(), "alpha": alpha})
    results = local_optima(g, cfg)
    best = None
    total_moves = 0
    for w, E, moves in results:
        total_moves += moves
        supp = tuple(int(e) for e in positive_support(w))
        if best is None or _better(E, supp, best[0], best[1], cfg.tol):
            best = (E, supp, w)
    sol = _make_solution(g, best[2], cfg.alpha, "local_optimum", total_moves,
                         {"restarts": cfg.restarts, "distinct_optima": len({tuple(positive_support(w)) for w, _, _ in results})})
    assert is_acyclic(g, sol.flow)
    assert np.abs(kirchhoff_residual(g, sol.flow)).max(initial=0.0) <= admissible_tol(g)
    return sol


def solve(g: EmbeddedGraph, cfg: SolveConfig, method: str = "auto") -> Solution:
    """Dispatch to the oracle when enumeration is affordable, else local search."""
    if method == "oracle":
        return oracle_solve(g, cfg.alpha, cfg)
    if method == "local":
        return local_search(g, cfg.alpha, cfg)
    k = _max_support(g, cfg)
    if math.comb(g.n_edges, k) <= 10**5:
        return oracle_solve(g, cfg.alpha, cfg)
    return local_search(g, cfg.alpha, cfg)
