"""Graph selection under branched energy plus lambda times the bridge cost.

The bridge term is treated as a black box: candidates come from the
geometric solver (all forest flows when enumerable, otherwise distinct local
optima), the cheapest ``candidate_pool`` of them are scored, and a pivot
search on the combined objective refines the winner.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bot_solver import SolveConfig, _better, _max_support, enumerate_forest_flows, local_optima, pivot_descent
from .errors import Infeasible
from .gaussian_bridge import COV_RTOL, GaussianMarginalPair, dynamic_cost
from .graph_core import EmbeddedGraph, energy, positive_support
from .graph_dynamics import DynamicsParams

ENUMERATION_LIMIT = 10**5


@dataclass
class HybridConfig:
    lam: float
    solve_cfg: SolveConfig
    dyn_params: DynamicsParams
    marginals: GaussianMarginalPair
    N_steps: int = 50
    candidate_pool: int = 16
    cov_rtol: float = COV_RTOL
    refine: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be >= 1")


@dataclass
class HybridSolution:
    flow: np.ndarray
    support: tuple
    geometric_cost: float
    dynamic_cost_value: float
    total: float
    lam: float
    pool_trace: list = field(default_factory=list)


class DynamicCostCache:
    """Thread-safe memo of bridge costs keyed by support and quantised weights."""

    def __init__(self, quantum: float = 1e-9):
        self.quantum = quantum
        self._store: dict = {}
        self._lock = threading.Lock()
        self.misses = 0

    def key(self, w) -> tuple:
        w = np.asarray(w, float)
        supp = tuple(int(e) for e in positive_support(w))
        return supp, tuple(int(round(w[e] / self.quantum)) for e in supp)

    def get(self, g: EmbeddedGraph, w, cfg: HybridConfig) -> float:
        k = self.key(w)
        with self._lock:
            if k in self._store:
                return self._store[k]
        val = dynamic_cost(g, w, cfg.dyn_params, cfg.marginals, cfg.N_steps, cfg.cov_rtol)
        with self._lock:
            self._store[k] = val  # last writer wins on identical keys
            self.misses += 1
        return val


def hybrid_objective(g: EmbeddedGraph, w, cfg: HybridConfig, cache: Optional[DynamicCostCache] = None):
    """``(E_alpha, J_dyn, E_alpha + lam * J_dyn)`` for one flow."""
    cache = cache or DynamicCostCache()
    E = energy(g, w, cfg.solve_cfg.alpha)
    J = cache.get(g, w, cfg)
    return E, J, E + cfg.lam * J


def candidate_pool(g: EmbeddedGraph, cfg: SolveConfig) -> list:
    """Distinct geometric candidates as ``(support, flow, energy)``, cheapest first."""
    k = _max_support(g, cfg)
    if math.comb(g.n_edges, k) <= ENUMERATION_LIMIT:
        raw = enumerate_forest_flows(g, cfg)
    else:
        raw = {}
        for w, _, _ in local_optima(g, cfg):
            raw.setdefault(tuple(int(e) for e in positive_support(w)), w)
        raw = sorted(raw.items())
    if not raw:
        raise Infeasible("no admissible flow on this library")
    pool = [(supp, w, energy(g, w, cfg.alpha)) for supp, w in raw]
    pool.sort(key=lambda p: (p[2], p[0]))
    return pool


def hybrid_solve(
    g: EmbeddedGraph,
    cfg: HybridConfig,
    cache: Optional[DynamicCostCache] = None,
    pool: Optional[list] = None,
    workers: int = 1,
) -> HybridSolution:
    cache = cache or DynamicCostCache()
    pool = candidate_pool(g, cfg.solve_cfg) if pool is None else pool
    members = pool[: cfg.candidate_pool]
    tol = cfg.solve_cfg.tol

    if cfg.lam == 0:
        # F_0 = E exactly; the bridge cost is only needed for the winner
        trace = [{"support": s, "E": E, "J": None, "F": E} for s, _, E in members]
    else:
        def score(m):
            supp, w, E = m
            J = cache.get(g, w, cfg)
            return {"support": supp, "E": E, "J": J, "F": E + cfg.lam * J}

        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                trace = list(ex.map(score, members))
        else:
            trace = [score(m) for m in members]

    best_i = 0
    for i, t in enumerate(trace):
        if _better(t["F"], t["support"], trace[best_i]["F"], trace[best_i]["support"], tol):
            best_i = i
    w = members[best_i][1]

    if cfg.refine and cfg.lam > 0:
        def objective(x):
            return energy(g, x, cfg.solve_cfg.alpha) + cfg.lam * cache.get(g, x, cfg)

        w, _, _ = pivot_descent(g, w, objective, tol, cfg.solve_cfg.max_iters)

    E = float(energy(g, w, cfg.solve_cfg.alpha))
    J = float(cache.get(g, w, cfg))
    total = E + cfg.lam * J
    sol = HybridSolution(w, tuple(int(e) for e in positive_support(w)), E, J, total, cfg.lam, trace)
    assert all(total <= t["F"] + tol for t in trace), "hybrid solution does not dominate its pool"
    return sol


def lambda_sweep(g: EmbeddedGraph, cfg: HybridConfig, lambdas: Sequence[float], workers: int = 1) -> list:
    """Solve for each lambda, sharing the candidate pool and the bridge-cost cache."""
    cache = DynamicCostCache()
    pool = candidate_pool(g, cfg.solve_cfg)
    out = []
    for lam in lambdas:
        c = HybridConfig(lam, cfg.solve_cfg, cfg.dyn_params, cfg.marginals, cfg.N_steps,
                         cfg.candidate_pool, cfg.cov_rtol, cfg.refine)
        out.append(hybrid_solve(g, c, cache, pool, workers))
    return out


def envelope(trace: Sequence[dict], lambdas: Sequence[float]) -> np.ndarray:
    """``lam -> min_pool (E + lam * J)`` over a fully scored pool trace."""
    E = np.array([t["E"] for t in trace])
    J = np.array([t["J"] for t in trace], dtype=float)
    return np.array([np.min(E + lam * J) for lam in lambdas])
