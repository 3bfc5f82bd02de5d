"""Linear dynamics induced by a weighted graph.

Flux-weighted adjacency ``W``, its symmetrisation ``S``, degrees ``D`` and
Laplacian ``L = D - S`` give the drift ``A = -kappa I - beta_dyn L`` and the
noise amplitude ``C = sigma0 I + sigma1 D^(1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import NotPSD
from .graph_core import EmbeddedGraph

PSD_RTOL = 1e-10


@dataclass
class DynamicsParams:
    kappa: float = 1.0
    beta_dyn: float = 1.0
    sigma0: float = 1.0
    sigma1: float = 0.0
    B_stim: Optional[np.ndarray] = None
    stimulus: Optional[Callable] = None  # t -> vector of length B_stim.shape[1]

    def __post_init__(self):
        if not (self.kappa > 0 and self.beta_dyn > 0 and self.sigma0 > 0 and self.sigma1 >= 0):
            raise ValueError("need kappa, beta_dyn, sigma0 > 0 and sigma1 >= 0")

    def drift_offset(self, n: int) -> Optional[Callable]:
        """``t -> B_stim @ a(t)``, or None when there is no stimulus."""
        if self.B_stim is None or self.stimulus is None:
            return None
        B = np.atleast_2d(np.asarray(self.B_stim, float))
        if B.shape[0] != n:
            raise ValueError(f"B_stim has {B.shape[0]} rows for {n} states")
        a = self.stimulus
        return lambda t: B @ np.atleast_1d(np.asarray(a(t), float))


@dataclass
class DynamicsMatrices:
    W: np.ndarray
    S: np.ndarray
    D: np.ndarray
    L: np.ndarray
    A: np.ndarray
    C: np.ndarray

    def items(self):
        return {"W": self.W, "S": self.S, "D": self.D, "L": self.L, "A": self.A, "C": self.C}.items()


def adjacency(g: EmbeddedGraph, w) -> np.ndarray:
    """``W[i, j]`` is the total flux on edges from vertex i to vertex j."""
    W = np.zeros((g.n_vertices, g.n_vertices))
    np.add.at(W, (g.tails, g.heads), np.asarray(w, float))
    return W


def laplacian(W) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    W = np.asarray(W, float)
    if np.any(W < 0) or np.any(np.diag(W) != 0):
        raise ValueError("W must be nonnegative with zero diagonal")
    S = 0.5 * (W + W.T)
    D = np.diag(S.sum(axis=1))
    return S, D, D - S


def canonical_dynamics(L, D, params: DynamicsParams) -> tuple[np.ndarray, np.ndarray]:
    L = np.asarray(L, float)
    D = np.asarray(D, float)
    n = len(L)
    if not np.allclose(L, L.T, rtol=0, atol=PSD_RTOL * max(1.0, np.abs(L).max(initial=0.0))):
        raise NotPSD("L is not symmetric")
    lam = np.linalg.eigvalsh(L) if n else np.zeros(0)
    if n and lam.min() < -PSD_RTOL * max(np.abs(lam).max(), 1e-300):
        raise NotPSD(f"L has eigenvalue {lam.min()!r}")
    d = np.diag(D)
    if np.any(d < 0):
        raise NotPSD("degree matrix has a negative entry")
    I = np.eye(n)
    A = -params.kappa * I - params.beta_dyn * L
    C = params.sigma0 * I + params.sigma1 * np.diag(np.sqrt(d))
    return A, C


def build_dynamics(g: EmbeddedGraph, w, params: DynamicsParams) -> DynamicsMatrices:
    W = adjacency(g, w)
    S, D, L = laplacian(W)
    A, C = canonical_dynamics(L, D, params)
    return DynamicsMatrices(W, S, D, L, A, C)


def write_matrices(directory, mats: DynamicsMatrices) -> list:
    """One plain-text file per matrix, named ``<key>.txt``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, M in mats.items():
        p = out / f"{name}.txt"
        np.savetxt(p, M, fmt="%.17g", header=name)
        paths.append(p)
    return paths


def read_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path))
