"""Minimum relative-entropy steering of the graph-induced linear SDE.

For ``dX = (A X + B a(t) + u) dt + C dW`` the path-space KL divergence of a
controlled law from the uncontrolled one is ``1/2 E int u^T (C C^T)^{-1} u dt``.
With affine feedback ``u_k = ubar_k + K_k (x_k - m_k)`` the cost splits
exactly into a mean part (open-loop ``ubar``) and a covariance part (gains
``K``), which are solved separately on a uniform time grid:

* mean: closed form through the discrete controllability Gramian;
* covariance: augmented-Lagrangian continuation on the terminal covariance,
  with L-BFGS inner solves on the gains.

All costs are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .errors import NoConvergence, SingularGramian
from .graph_core import EmbeddedGraph
from .graph_dynamics import DynamicsParams, build_dynamics

DEFAULT_STEPS = 100
COV_RTOL = 1e-4


def _is_pd(S: np.ndarray) -> bool:
    return np.allclose(S, S.T, atol=1e-12) and np.linalg.eigvalsh(S).min() > 0


@dataclass
class GaussianMarginalPair:
    m0: np.ndarray
    mT: np.ndarray
    Sigma0: np.ndarray
    SigmaT: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        self.m0 = np.atleast_1d(np.asarray(self.m0, float))
        self.mT = np.atleast_1d(np.asarray(self.mT, float))
        self.Sigma0 = np.atleast_2d(np.asarray(self.Sigma0, float))
        self.SigmaT = np.atleast_2d(np.asarray(self.SigmaT, float))
        n = len(self.m0)
        if len(self.mT) != n or self.Sigma0.shape != (n, n) or self.SigmaT.shape != (n, n):
            raise ValueError("marginal dimensions are inconsistent")
        if not (_is_pd(self.Sigma0) and _is_pd(self.SigmaT)):
            raise ValueError("marginal covariances must be symmetric positive definite")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    @property
    def dim(self) -> int:
        return len(self.m0)


@dataclass
class DiscreteSystem:
    """Exact sampling of the linear SDE on ``t_k = k T / N``.

    ``x_{k+1} = A_d x_k + r_k + noise(Q_d)`` for the uncontrolled law.
    """

    A: np.ndarray
    C: np.ndarray
    A_d: np.ndarray
    Q_d: np.ndarray
    r: np.ndarray
    T: float
    N: int
    offset: Optional[Callable] = None

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def R(self) -> np.ndarray:
        return self.C @ self.C.T

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def propagate_mean(self, m0) -> np.ndarray:
        m = np.empty((self.N + 1, self.n))
        m[0] = m0
        for k in range(self.N):
            m[k + 1] = self.A_d @ m[k] + self.r[k]
        return m

    def propagate_cov(self, Sigma0) -> np.ndarray:
        S = np.empty((self.N + 1, self.n, self.n))
        S[0] = Sigma0
        for k in range(self.N):
            S[k + 1] = self.A_d @ S[k] @ self.A_d.T + self.Q_d
        return S


def discretize(A, C, B_stim=None, a=None, T: float = 1.0, N: int = DEFAULT_STEPS, quad_nodes: int = 6) -> DiscreteSystem:
    """Exact discretisation: ``A_d = exp(A dt)`` and Van Loan's block exponential for ``Q_d``.

    The stimulus contribution ``r_k = int_0^dt exp(A (dt - s)) B a(t_k + s) ds``
    uses Gauss-Legendre quadrature with ``quad_nodes`` points per step.
    """
    if N < 2:
        raise ValueError("need at least two time steps")
    A = np.atleast_2d(np.asarray(A, float))
    C = np.atleast_2d(np.asarray(C, float))
    n = len(A)
    dt = T / N
    A_d = expm(A * dt)
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = C @ C.T
    M[n:, n:] = A.T
    E = expm(M * dt)
    Q_d = E[n:, n:].T @ E[:n, n:]
    Q_d = 0.5 * (Q_d + Q_d.T)
    r = np.zeros((N, n))
    offset = None
    if B_stim is not None and a is not None:
        B = np.atleast_2d(np.asarray(B_stim, float))

        def offset(t):
            return B @ np.atleast_1d(np.asarray(a(t), float))

        x, wq = np.polynomial.legendre.leggauss(quad_nodes)
        s = 0.5 * dt * (x + 1.0)
        wq = 0.5 * dt * wq
        kernels = [expm(A * (dt - sj)) for sj in s]
        for k in range(N):
            tk = k * dt
            r[k] = sum(wj * Kj @ offset(tk + sj) for wj, Kj, sj in zip(wq, kernels, s))
    return DiscreteSystem(A, C, A_d, Q_d, r, float(T), int(N), offset)


@dataclass
class MeanSteering:
    controls: np.ndarray
    means: np.ndarray
    cost: float
    terminal_error: float


def mean_steering_cost(system: DiscreteSystem, m0, mT) -> MeanSteering:
    """Minimum-energy open-loop controls for ``m_{k+1} = A_d m_k + ubar_k dt + r_k``.

    Minimises ``1/2 sum_k ubar_k^T R^{-1} ubar_k dt`` subject to hitting ``mT``
    exactly; the optimum is ``1/2 d^T G^{-1} d`` with ``G`` the discrete
    controllability Gramian and ``d`` the gap left by free propagation.
    """
    m0 = np.asarray(m0, float)
    mT = np.asarray(mT, float)
    n, N, dt = system.n, system.N, system.dt
    R = system.R
    free = system.propagate_mean(m0)[-1]
    d = mT - free
    Phi = np.empty((N, n, n))
    Phi[N - 1] = np.eye(n)
    for k in range(N - 2, -1, -1):
        Phi[k] = Phi[k + 1] @ system.A_d
    G = dt * np.einsum("kij,jl,kml->im", Phi, R, Phi)
    G = 0.5 * (G + G.T)
    if np.linalg.cond(G) > 1e14:
        raise SingularGramian(f"controllability Gramian is singular (cond {np.linalg.cond(G):.3g})")
    lam = np.linalg.solve(G, d)
    controls = np.einsum("ij,kmj,m->ki", R, Phi, lam)
    Rinv = np.linalg.inv(R)
    cost = 0.5 * dt * float(np.einsum("ki,ij,kj->", controls, Rinv, controls))
    means = np.empty((N + 1, n))
    means[0] = m0
    for k in range(N):
        means[k + 1] = system.A_d @ means[k] + controls[k] * dt + system.r[k]
    err = float(np.linalg.norm(means[-1] - mT))
    assert err <= 1e-9 * max(1.0, float(np.linalg.norm(mT))), f"terminal mean error {err}"
    return MeanSteering(controls, means, cost, err)


@dataclass
class CovSteering:
    gains: np.ndarray
    covs: np.ndarray
    cost: float
    terminal_error: float
    outer_iterations: int
    trace: list = field(default_factory=list)


def _cov_rollout(system: DiscreteSystem, Sigma0, K):
    N, dt = system.N, system.dt
    Rinv = np.linalg.inv(system.R)
    S = np.empty((N + 1,) + Sigma0.shape)
    S[0] = Sigma0
    cost = 0.0
    for k in range(N):
        F = system.A_d + dt * K[k]
        cost += 0.5 * dt * np.trace(K[k] @ S[k] @ K[k].T @ Rinv)
        S[k + 1] = F @ S[k] @ F.T + system.Q_d
    return S, cost


def covariance_cost(system: DiscreteSystem, Sigma0, gains) -> tuple[float, np.ndarray]:
    """Cost and covariance trajectory of a given gain sequence (no optimisation)."""
    S, cost = _cov_rollout(system, np.asarray(Sigma0, float), np.asarray(gains, float))
    return cost, S


def covariance_steering_cost(
    system: DiscreteSystem,
    Sigma0,
    SigmaT,
    rtol: float = COV_RTOL,
    max_outer: int = 40,
    rho0: float = 10.0,
    gains0=None,
) -> CovSteering:
    """Feedback gains steering ``Sigma0`` to ``SigmaT`` at minimum quadratic cost.

    Minimises ``1/2 sum_k tr(K_k Sigma_k K_k^T R^{-1}) dt`` subject to
    ``Sigma_{k+1} = F_k Sigma_k F_k^T + Q_d`` with ``F_k = A_d + K_k dt`` and
    ``Sigma_N = SigmaT``. The terminal constraint is relaxed by an augmented
    Lagrangian whose penalty weight doubles each outer round until the
    relative Frobenius error is at most ``rtol``. Gradients come from the
    adjoint recursion ``P_k = dt/2 K_k^T R^{-1} K_k + F_k^T P_{k+1} F_k``.

    Raises :class:`NoConvergence` (with the best iterate attached) when the
    tolerance is not met within ``max_outer`` rounds.
    """
    Sigma0 = np.atleast_2d(np.asarray(Sigma0, float))
    SigmaT = np.atleast_2d(np.asarray(SigmaT, float))
    n, N, dt = system.n, system.N, system.dt
    scale = float(np.linalg.norm(SigmaT))
    Rinv = np.linalg.inv(system.R)
    A_d, Q_d = system.A_d, system.Q_d

    K = np.zeros((N, n, n)) if gains0 is None else np.array(gains0, float).reshape(N, n, n)
    S, cost = _cov_rollout(system, Sigma0, K)
    err = float(np.linalg.norm(S[-1] - SigmaT)) / scale
    if err <= rtol and gains0 is None:
        return CovSteering(K, S, cost, err, 0, [])

    Y = np.zeros((n, n))
    rho = rho0
    trace: list = []

    def fg(x):
        Kx = x.reshape(N, n, n)
        Sx = np.empty((N + 1, n, n))
        Sx[0] = Sigma0
        F = A_d[None] + dt * Kx
        c = 0.0
        for k in range(N):
            c += 0.5 * dt * np.trace(Kx[k] @ Sx[k] @ Kx[k].T @ Rinv)
            Sx[k + 1] = F[k] @ Sx[k] @ F[k].T + Q_d
        E = (Sx[-1] - SigmaT) / scale
        J = c + float(np.sum(Y * E)) + 0.5 * rho * float(np.sum(E * E))
        P = (Y + rho * E) / scale
        P = 0.5 * (P + P.T)
        grad = np.empty_like(Kx)
        for k in range(N - 1, -1, -1):
            grad[k] = dt * (Rinv @ Kx[k] @ Sx[k]) + 2.0 * dt * (P @ F[k] @ Sx[k])
            P = 0.5 * dt * Kx[k].T @ Rinv @ Kx[k] + F[k].T @ P @ F[k]
        return J, grad.ravel()

    best = None
    for outer in range(1, max_outer + 1):
        stage: list = []
        res = minimize(
            fg,
            K.ravel(),
            jac=True,
            method="L-BFGS-B",
            callback=lambda xk: stage.append(fg(xk)[0]),
            options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 20},
        )
        K = res.x.reshape(N, n, n)
        S, cost = _cov_rollout(system, Sigma0, K)
        E = (S[-1] - SigmaT) / scale
        err = float(np.linalg.norm(E))
        trace.append({"outer": outer, "rho": rho, "cost": cost, "error": err, "objective": stage})
        if best is None or err < best.terminal_error:
            best = CovSteering(K.copy(), S, cost, err, outer, trace)
        if err <= rtol:
            return CovSteering(K, S, cost, err, outer, trace)
        Y = Y + rho * E
        rho *= 2.0
    raise NoConvergence(f"terminal covariance error {best.terminal_error:.3g} > {rtol}", best)


@dataclass
class BridgeSolution:
    times: np.ndarray
    controls: np.ndarray
    gains: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    cost_mean: float
    cost_cov: float
    mean_error: float
    cov_error: float

    @property
    def cost_total(self) -> float:
        return self.cost_mean + self.cost_cov


def steer(system: DiscreteSystem, marginals: GaussianMarginalPair, rtol: float = COV_RTOL) -> BridgeSolution:
    ms = mean_steering_cost(system, marginals.m0, marginals.mT)
    cs = covariance_steering_cost(system, marginals.Sigma0, marginals.SigmaT, rtol=rtol)
    return BridgeSolution(system.times, ms.controls, cs.gains, ms.means, cs.covs, ms.cost, cs.cost,
                          ms.terminal_error, cs.terminal_error)


def graph_system(g: EmbeddedGraph, w, params: DynamicsParams, T: float, N: int = DEFAULT_STEPS) -> DiscreteSystem:
    mats = build_dynamics(g, w, params)
    B = params.B_stim if params.stimulus is not None else None
    return discretize(mats.A, mats.C, B, params.stimulus, T, N)


def solve_bridge(g: EmbeddedGraph, w, params: DynamicsParams, marginals: GaussianMarginalPair,
                 N: int = DEFAULT_STEPS, rtol: float = COV_RTOL) -> BridgeSolution:
    if marginals.dim != g.n_vertices:
        raise ValueError(f"marginals have dimension {marginals.dim}, graph has {g.n_vertices} vertices")
    return steer(graph_system(g, w, params, marginals.T, N), marginals, rtol)


def dynamic_cost(g: EmbeddedGraph, w, params: DynamicsParams, marginals: GaussianMarginalPair,
                 N: int = DEFAULT_STEPS, rtol: float = COV_RTOL) -> float:
    """Graph-dependent bridge cost: minimum KL from the uncontrolled law, in nats."""
    return solve_bridge(g, w, params, marginals, N, rtol).cost_total


def kl_monte_carlo(
    system: DiscreteSystem,
    controls,
    m0,
    Sigma0,
    n_paths: int = 100_000,
    rng_seed: int = 0,
    gains=None,
    means=None,
    chunk: int = 20_000,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``E_u[log dP^u/dP^0]`` along Euler-Maruyama paths.

    The log-density is accumulated in its stochastic-integral form
    ``sum_k u_k^T R^{-1} (dx_k - b_k dt) - 1/2 u_k^T R^{-1} u_k dt`` with
    ``b_k`` the uncontrolled drift. Chunk ``i`` uses seed ``rng_seed + i``.
    Returns ``(estimate, standard_error)``.
    """
    controls = np.atleast_2d(np.asarray(controls, float))
    n, N, dt = system.n, system.N, system.dt
    if controls.shape != (N, n):
        raise ValueError(f"controls must have shape {(N, n)}")
    A, C = system.A, system.C
    Rinv = np.linalg.inv(system.R)
    L0 = np.linalg.cholesky(np.atleast_2d(np.asarray(Sigma0, float)))
    offsets = np.zeros((N, n))
    if system.offset is not None:
        offsets = np.array([system.offset(k * dt) for k in range(N)])
    samples = []
    for i, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        rng = np.random.default_rng(rng_seed + i)
        x = np.asarray(m0, float) + rng.standard_normal((m, n)) @ L0.T
        logd = np.zeros(m)
        for k in range(N):
            u = np.broadcast_to(controls[k], (m, n))
            if gains is not None:
                u = u + (x - means[k]) @ np.asarray(gains[k]).T
            drift0 = x @ A.T + offsets[k]
            dW = rng.standard_normal((m, n)) * np.sqrt(dt)
            dx = (drift0 + u) * dt + dW @ C.T
            uR = u @ Rinv
            logd += np.einsum("pi,pi->p", uR, dx - drift0 * dt) - 0.5 * dt * np.einsum("pi,pi->p", uR, u)
            x = x + dx
        samples.append(logd)
    s = np.concatenate(samples)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(len(s)))
