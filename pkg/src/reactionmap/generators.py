"""Small instances used by tests, scripts and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .bot_solver import feasibility_check, random_vertex_flow
from .cost_field import ConstantCost
from .graph_core import EmbeddedGraph


def y_vs_v() -> EmbeddedGraph:
    """Two half-unit sources, one unit sink and a relay midway; unit constant cost.

    Edge order: s1->t, s2->t, s1->r, s2->r, r->t.
    """
    V = [(0.0, 1.0), (0.0, -1.0), (2.0, 0.0), (1.0, 0.0)]
    E = [(0, 2), (1, 2), (0, 3), (1, 3), (3, 2)]
    return EmbeddedGraph.build(V, E, [0.5, 0.5, -1.0, 0.0], cost=ConstantCost(1.0),
                               vertex_ids=("s1", "s2", "t", "r"), edge_ids=("s1t", "s2t", "s1r", "s2r", "rt"))


def diamond(cheap: float = 2.0, dear: float = 3.0) -> EmbeddedGraph:
    """Unit mass from s to t over two 2-edge paths with total costs ``cheap`` and ``dear``."""
    V = [(0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.0)]
    E = [(0, 1), (1, 3), (0, 2), (2, 3)]
    beta = [cheap / 2, cheap / 2, dear / 2, dear / 2]
    return EmbeddedGraph.build(V, E, [1.0, 0.0, 0.0, -1.0], beta=beta, vertex_ids=("s", "a", "b", "t"))


def tie_library(detour: float = 0.0) -> EmbeddedGraph:
    """Three unit-mass routes from s to t with geometric cost 2 each.

    Edges: s->t (beta 2), s->r1->t (each ``1 + detour/2``), s->r2->t (1 + 1).
    The direct edge leaves both relays isolated, each relay route pulls one
    relay into the Laplacian, so the three supports induce different dynamics.
    """
    V = [(0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.0)]
    E = [(0, 3), (0, 1), (1, 3), (0, 2), (2, 3)]
    beta = [2.0, 1.0 + detour / 2, 1.0 + detour / 2, 1.0, 1.0]
    return EmbeddedGraph.build(V, E, [1.0, 0.0, 0.0, -1.0], beta=beta,
                               vertex_ids=("s", "r1", "r2", "t"), edge_ids=("st", "sr1", "r1t", "sr2", "r2t"))


def tie_bridge_setup():
    """Dynamics and marginals for :func:`tie_library`: steer relay r1 from mean 0 to 1.

    Coupling r1 into the flow raises its noise level, which makes the r1 route
    the cheapest to steer.
    """
    from .gaussian_bridge import GaussianMarginalPair
    from .graph_dynamics import DynamicsParams

    params = DynamicsParams(kappa=1.0, beta_dyn=1.0, sigma0=1.0, sigma1=0.5)
    marg = GaussianMarginalPair(np.zeros(4), [0.0, 1.0, 0.0, 0.0], 0.5 * np.eye(4), 0.5 * np.eye(4), 1.0)
    return params, marg


def random_library(
    rng: np.random.Generator,
    max_vertices: int = 6,
    max_edges: int = 10,
    beta_range: tuple = (0.5, 2.0),
    max_tries: int = 1000,
) -> EmbeddedGraph:
    """Random feasible library: straight edges, random beta, one or two sources and sinks."""
    for _ in range(max_tries):
        n = int(rng.integers(3, max_vertices + 1))
        m = int(rng.integers(n - 1, max_edges + 1))
        V = rng.uniform(0.0, 1.0, (n, 2))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        picks = rng.choice(len(pairs), size=min(m, len(pairs)), replace=False)
        E = [pairs[k] for k in picks]
        roles = rng.permutation(n)
        n_src = int(rng.integers(1, 3))
        n_snk = int(rng.integers(1, 3))
        if n_src + n_snk > n:
            n_src, n_snk = 1, 1
        b = np.zeros(n)
        b[roles[:n_src]] = rng.dirichlet(np.ones(n_src))
        b[roles[n_src : n_src + n_snk]] = -rng.dirichlet(np.ones(n_snk))
        beta = rng.uniform(*beta_range, len(E))
        try:
            g = EmbeddedGraph.build(V, E, b, beta=beta)
        except ValueError:
            continue
        if feasibility_check(g).feasible:
            return g
    raise RuntimeError("could not draw a feasible library")


def random_admissible_flow(g: EmbeddedGraph, rng: np.random.Generator) -> np.ndarray:
    """A random (generally non-vertex) admissible flow: convex mix of simplex vertices."""
    k = int(rng.integers(2, 5))
    weights = rng.dirichlet(np.ones(k))
    return sum(wt * random_vertex_flow(g, rng) for wt in weights)
