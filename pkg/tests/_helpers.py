"""Shared builders for the test suite."""

import itertools

import networkx as nx
import numpy as np

from reactionmap.graph_core import EmbeddedGraph
from reactionmap.generators import random_admissible_flow, random_library


def path_graph(n=2, b=None, beta=None):
    V = [(float(i), 0.0) for i in range(n)]
    E = [(i, i + 1) for i in range(n - 1)]
    if b is None:
        b = [1.0] + [0.0] * (n - 2) + [-1.0]
    return EmbeddedGraph.build(V, E, b, beta=beta or [1.0] * len(E))


def with_reverse_edges(g: EmbeddedGraph, rng) -> EmbeddedGraph:
    """Append an antiparallel copy of every edge so the library has directed cycles."""
    edges = [(int(t), int(h)) for t, h in zip(g.tails, g.heads)]
    edges += [(h, t) for t, h in edges]
    beta = np.r_[g.beta, rng.uniform(0.5, 2.0, g.n_edges)]
    return EmbeddedGraph.build(g.vertices, edges, g.b, beta=beta)


def directed_cycles(g: EmbeddedGraph, limit=200):
    """Directed cycles as edge-index lists, parallel edges expanded."""
    G = nx.MultiDiGraph()
    for e, (t, h) in enumerate(zip(g.tails, g.heads)):
        G.add_edge(int(t), int(h), key=e)
    out = []
    for cyc in itertools.islice(nx.simple_cycles(G), limit):
        hops = list(zip(cyc, cyc[1:] + cyc[:1]))
        out.append([next(iter(G[u][v])) for u, v in hops])
    return out


def polluted_flow(rng, max_vertices=6, max_edges=8):
    """A library with directed cycles and an admissible flow carrying 1-3 cycle components."""
    g = with_reverse_edges(random_library(rng, max_vertices, max_edges), rng)
    w = random_admissible_flow(g, rng)
    cycles = directed_cycles(g)
    for k in rng.choice(len(cycles), size=min(len(cycles), int(rng.integers(1, 4))), replace=False):
        w[cycles[k]] += rng.uniform(0.05, 0.5)
    return g, w


def forest_supports(g: EmbeddedGraph, w) -> bool:
    """Undirected forest test on the positive support, via networkx."""
    G = nx.MultiGraph()
    G.add_nodes_from(range(g.n_vertices))
    for e in np.flatnonzero(np.asarray(w) > 1e-12):
        G.add_edge(int(g.tails[e]), int(g.heads[e]))
    return nx.is_forest(G)


def lp_min_cost(g: EmbeddedGraph, costs) -> float:
    """Linear min-cost flow value through networkx network simplex (independent of the solver)."""
    scale = 10**6
    demand = -np.rint(g.b * scale).astype(int)
    demand[np.argmax(np.abs(demand))] -= demand.sum()
    G = nx.DiGraph()
    for v in range(g.n_vertices):
        G.add_node(v, demand=int(demand[v]))
    # parallel edges are split through auxiliary nodes
    for e, (t, h) in enumerate(zip(g.tails, g.heads)):
        mid = ("e", e)
        G.add_edge(int(t), mid, weight=0)
        G.add_edge(mid, int(h), weight=int(round(costs[e] * scale)))
    flow_cost, _ = nx.network_simplex(G)
    return flow_cost / scale**2


def vertex_enumeration_minimum(g: EmbeddedGraph, alpha: float):
    """Minimum of the energy over basic feasible solutions of ``A w = b, w >= 0``.

    Every subset of linearly independent incidence columns is solved by least
    squares; a concave objective attains its minimum at one of these points.
    """
    from reactionmap.graph_core import energy, incidence_matrix

    A = incidence_matrix(g)
    rank = np.linalg.matrix_rank(A)
    best = (np.inf, None)
    for k in range(1, rank + 1):
        for S in itertools.combinations(range(g.n_edges), k):
            cols = A[:, S]
            if np.linalg.matrix_rank(cols) < k:
                continue
            x, *_ = np.linalg.lstsq(cols, g.b, rcond=None)
            if np.abs(cols @ x - g.b).max() > 1e-9 or x.min() < -1e-12:
                continue
            w = np.zeros(g.n_edges)
            w[list(S)] = np.clip(x, 0, None)
            E = energy(g, w, alpha)
            if E < best[0]:
                best = (E, w)
    return best


def scalar_cov_relaxation(a_d, q, dt, R, s0, sT, N):
    """Convex lower bound on scalar covariance steering (cvxpy, lossless relaxation).

    With ``U_k = K_k s_k`` the recursion ``s_{k+1} = (a_d + K_k dt)^2 s_k + q``
    becomes ``a_d^2 s_k + 2 a_d dt U_k + dt^2 U_k^2 / s_k + q``; replacing
    ``U_k^2 / s_k`` by ``Z_k >= quad_over_lin(U_k, s_k)`` makes it convex.
    """
    import cvxpy as cp

    s = cp.Variable(N + 1)
    U = cp.Variable(N)
    Z = cp.Variable(N)
    cons = [s[0] == s0, s[N] == sT, s >= 1e-9]
    cons += [Z[k] >= cp.quad_over_lin(U[k], s[k]) for k in range(N)]
    cons += [s[k + 1] == a_d**2 * s[k] + 2 * a_d * dt * U[k] + dt**2 * Z[k] + q for k in range(N)]
    prob = cp.Problem(cp.Minimize(0.5 * dt / R * cp.sum(Z)), cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def constant_gain_search(a_d, q, dt, R, s0, sT, N, grid=None):
    """Cheapest constant scalar gain whose terminal variance equals ``sT``.

    A dense gain grid brackets the roots of the terminal condition, which are
    then refined by Brent's method. Rollouts are vectorised over the grid.
    """
    from scipy.optimize import brentq

    def rollout(k):
        k = np.atleast_1d(np.asarray(k, float))
        F2 = (a_d + k * dt) ** 2
        s = np.full_like(k, s0)
        acc = np.zeros_like(k)
        for _ in range(N):
            acc += s
            s = F2 * s + q
        return s, 0.5 * dt / R * k**2 * acc

    grid = np.linspace(-20, 20, 40001) if grid is None else grid
    gap = rollout(grid)[0] - sT
    roots = [brentq(lambda k: rollout(k)[0][0] - sT, grid[i], grid[i + 1], xtol=1e-14)
             for i in np.flatnonzero(np.sign(gap[:-1]) != np.sign(gap[1:]))]
    costs = [rollout(k)[1][0] for k in roots]
    i = int(np.argmin(costs))
    return float(costs[i]), float(roots[i])
