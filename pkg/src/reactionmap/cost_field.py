"""Anatomical cost densities c(x, tau) and their line integrals along edges.

Five field families are supported: constant, isotropic white-matter score,
diffusion tensor, mixed (scalar gain plus anisotropic norm plus offset) and a
directional plausibility score. Grid-sampled inputs are interpolated
multilinearly, with nearest-node extension outside the sampled box.

Binary field files
------------------
::

    bytes 0..5   magic  b"RMCOST"
    byte  6      version (1)
    bytes 7..10  header length H (uint32, little endian)
    H bytes      UTF-8 JSON header
    rest         float64 little-endian node arrays, in header["arrays"] order

Each array is row-major over the grid nodes; tensor arrays store the
d(d+1)/2 upper-triangle entries per node.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DegeneratePath, FormatError, NonUnitTangent, NotPSD, OutOfDomain

MAGIC = b"RMCOST"
VERSION = 1
UNIT_TOL = 1e-9
DEFAULT_NSUB = 16


@dataclass(frozen=True, eq=False)
class Grid:
    """Regular node grid: ``origin + spacing * index`` along each axis."""

    shape: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(s) for s in self.origin))
        if not (len(self.shape) == len(self.spacing) == len(self.origin)):
            raise ValueError("grid shape, spacing and origin must have equal length")
        if any(s < 2 for s in self.shape):
            raise ValueError("each grid axis needs at least two nodes")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def axes(self) -> list:
        return [o + h * np.arange(n) for n, h, o in zip(self.shape, self.spacing, self.origin)]

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def hi(self) -> np.ndarray:
        return np.array([o + h * (n - 1) for n, h, o in zip(self.shape, self.spacing, self.origin)])

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "spacing": list(self.spacing), "origin": list(self.origin)}


def _interpolator(grid: Grid, values: np.ndarray) -> RegularGridInterpolator:
    return RegularGridInterpolator(grid.axes, values, method="linear")


def _interp(grid: Grid, interp: RegularGridInterpolator, x: np.ndarray) -> np.ndarray:
    # nearest-node extension outside the sampled box
    return interp(np.clip(x, grid.lo, grid.hi))


def _check_symmetric_field(name: str, values: np.ndarray, d: int) -> None:
    if values.shape[-2:] != (d, d):
        raise ValueError(f"{name} must have trailing shape ({d}, {d})")
    if not np.allclose(values, np.swapaxes(values, -1, -2), atol=1e-12):
        raise ValueError(f"{name} must be symmetric at every node")


def _node_eigs(values: np.ndarray) -> np.ndarray:
    d = values.shape[-1]
    return np.linalg.eigvalsh(values.reshape(-1, d, d))


class CostField:
    """Base class. Subclasses implement :meth:`_evaluate` on batches."""

    variant: str = ""
    domain: Optional[tuple] = None

    @property
    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def _evaluate(self, x: np.ndarray, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, tau) -> np.ndarray:
        """Batch evaluation without input checks; ``x`` and ``tau`` are (m, d)."""
        return self._evaluate(np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(tau, float)))


@dataclass(frozen=True, eq=False)
class ConstantCost(CostField):
    c0: float
    domain: Optional[tuple] = None
    variant = "constant"

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    @property
    def bounds(self):
        return (float(self.c0), float(self.c0))

    def _evaluate(self, x, tau):
        return np.full(len(x), float(self.c0))


@dataclass(frozen=True, eq=False)
class IsotropicCost(CostField):
    """``c = c_min + (c_max - c_min) * (1 - w(x))`` with ``w`` clipped to [0, 1]."""

    grid: Grid
    w: np.ndarray
    c_min: float
    c_max: float
    domain: Optional[tuple] = None
    variant = "isotropic_whitematter"

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, float).reshape(self.grid.shape))
        if not 0 < self.c_min < self.c_max:
            raise ValueError("need 0 < c_min < c_max")

    @cached_property
    def _w(self):
        return _interpolator(self.grid, np.clip(self.w, 0.0, 1.0))

    @property
    def bounds(self):
        return (float(self.c_min), float(self.c_max))

    def _evaluate(self, x, tau):
        w = _interp(self.grid, self._w, x)
        return self.c_min + (self.c_max - self.c_min) * (1.0 - w)


@dataclass(frozen=True, eq=False)
class TensorCost(CostField):
    """``c = sqrt(tau^T (D(x) + eps I)^{-1} tau)``.

    The regularised field ``D + eps I`` is formed once at construction and
    checked node by node; ``D`` itself must be positive semidefinite.
    """

    grid: Grid
    D: np.ndarray
    eps: float
    domain: Optional[tuple] = None
    variant = "tensor"
    M: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.grid.dim
        D = np.asarray(self.D, float).reshape(self.grid.shape + (d, d))
        _check_symmetric_field("D", D, d)
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        M = D + self.eps * np.eye(d)
        lam = _node_eigs(M)
        if lam.min() < self.eps - 1e-10 * max(1.0, abs(lam).max()):
            raise NotPSD("D(x) + eps I has an eigenvalue below eps; D is not PSD")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "M", M)

    @cached_property
    def _M(self):
        return _interpolator(self.grid, self.M)

    @cached_property
    def _eig_range(self):
        lam = _node_eigs(self.M)
        return float(lam.min()), float(lam.max())

    @property
    def bounds(self):
        lo, hi = self._eig_range
        return (1.0 / np.sqrt(hi), 1.0 / np.sqrt(lo))

    def _evaluate(self, x, tau):
        M = _interp(self.grid, self._M, x)
        z = np.linalg.solve(M, tau[..., None])[..., 0]
        return np.sqrt(np.einsum("ij,ij->i", tau, z))


@dataclass(frozen=True, eq=False)
class MixedCost(CostField):
    """``c = a(x) * sqrt(tau^T A(x) tau) + b(x)``."""

    grid: Grid
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    domain: Optional[tuple] = None
    variant = "mixed"

    def __post_init__(self):
        d = self.grid.dim
        a = np.asarray(self.a, float).reshape(self.grid.shape)
        b = np.asarray(self.b, float).reshape(self.grid.shape)
        A = np.asarray(self.A, float).reshape(self.grid.shape + (d, d))
        if a.min() <= 0 or b.min() <= 0:
            raise ValueError("a(x) and b(x) must be positive")
        _check_symmetric_field("A", A, d)
        if _node_eigs(A).min() <= 0:
            raise NotPSD("A(x) must be positive definite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)

    @cached_property
    def _interps(self):
        return _interpolator(self.grid, self.a), _interpolator(self.grid, self.b), _interpolator(self.grid, self.A)

    @property
    def bounds(self):
        lam = _node_eigs(self.A)
        lo = self.a.min() * np.sqrt(lam.min()) + self.b.min()
        hi = self.a.max() * np.sqrt(lam.max()) + self.b.max()
        return (float(lo), float(hi))

    def _evaluate(self, x, tau):
        ia, ib, iA = self._interps
        A = _interp(self.grid, iA, x)
        q = np.einsum("ij,ijk,ik->i", tau, A, tau)
        return _interp(self.grid, ia, x) * np.sqrt(q) + _interp(self.grid, ib, x)


@dataclass(frozen=True, eq=False)
class PlausibilityCost(CostField):
    """``c = c_lo + (c_hi - c_lo) * (1 - p(x, tau))``.

    ``p`` is sampled on the spatial grid for each direction of a fixed unit
    ``codebook`` (shape (K, d)); a tangent uses its nearest codebook entry
    (largest dot product, first index on ties).
    """

    grid: Grid
    codebook: np.ndarray
    p: np.ndarray
    c_lo: float
    c_hi: float
    domain: Optional[tuple] = None
    variant = "plausibility"

    def __post_init__(self):
        cb = np.atleast_2d(np.asarray(self.codebook, float))
        if cb.shape[1] != self.grid.dim:
            raise ValueError("codebook dimension must match the grid")
        if np.any(np.abs(np.linalg.norm(cb, axis=1) - 1.0) > UNIT_TOL):
            raise ValueError("codebook entries must be unit vectors")
        p = np.asarray(self.p, float).reshape(self.grid.shape + (len(cb),))
        if not 0 < self.c_lo < self.c_hi:
            raise ValueError("need 0 < c_lo < c_hi")
        object.__setattr__(self, "codebook", cb)
        object.__setattr__(self, "p", p)

    @cached_property
    def _p(self):
        return _interpolator(self.grid, np.clip(self.p, 0.0, 1.0))

    @property
    def bounds(self):
        return (float(self.c_lo), float(self.c_hi))

    def _evaluate(self, x, tau):
        k = np.argmax(tau @ self.codebook.T, axis=1)
        p = _interp(self.grid, self._p, x)[np.arange(len(x)), k]
        return self.c_lo + (self.c_hi - self.c_lo) * (1.0 - p)


def eval_cost(cf: CostField, x, tau) -> float:
    """Evaluate the density at one point and unit direction, with input checks."""
    x = np.asarray(x, float).reshape(-1)
    tau = np.asarray(tau, float).reshape(-1)
    if abs(np.linalg.norm(tau) - 1.0) > UNIT_TOL:
        raise NonUnitTangent(f"|tau| = {np.linalg.norm(tau)!r}")
    if cf.domain is not None:
        lo, hi = (np.asarray(v, float) for v in cf.domain)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise OutOfDomain(f"x = {x.tolist()} outside {cf.domain}")
    return float(cf(x[None], tau[None])[0])


@dataclass(frozen=True)
class Polyline:
    """Piecewise-straight embedded path; the tangent is constant per segment."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, float))
        if len(pts) < 2:
            raise DegeneratePath("a path needs at least two points")
        object.__setattr__(self, "points", pts)
        if np.any(self.lengths <= 0):
            raise DegeneratePath("consecutive polyline points must be distinct")

    @property
    def segments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments, axis=1)

    @property
    def tangents(self) -> np.ndarray:
        return self.segments / self.lengths[:, None]

    @property
    def length(self) -> float:
        return float(self.lengths.sum())

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1].copy())

    def is_injective(self, tol: float = 1e-12) -> bool:
        """Diagnostic: no two non-adjacent segments intersect (2-D only checks crossings)."""
        pts = self.points
        gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        if np.any(gaps[np.triu_indices(len(pts), 1)] <= tol):
            return False
        if pts.shape[1] != 2:
            return True
        segs = list(zip(pts[:-1], pts[1:]))

        def cross(o, a, b):
            return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

        for i in range(len(segs)):
            for j in range(i + 2, len(segs)):
                p1, p2 = segs[i]
                q1, q2 = segs[j]
                d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
                d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
                if d1 * d2 < 0 and d3 * d4 < 0:
                    return False
        return True


def edge_cost(cf: CostField, path: Polyline, n_sub: int = DEFAULT_NSUB) -> float:
    """Composite midpoint rule for the line integral of ``c`` along ``path``."""
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    if path.length <= 0:
        raise DegeneratePath("zero-length path")
    frac = (np.arange(n_sub) + 0.5) / n_sub
    start = path.points[:-1]
    segs = path.segments
    x = (start[:, None, :] + frac[None, :, None] * segs[:, None, :]).reshape(-1, path.points.shape[1])
    tau = np.repeat(path.tangents, n_sub, axis=0)
    h = np.repeat(path.lengths / n_sub, n_sub)
    return float(np.dot(cf(x, tau), h))


# --- serialisation ---------------------------------------------------------


def _triu_pack(M: np.ndarray) -> np.ndarray:
    d = M.shape[-1]
    iu = np.triu_indices(d)
    return M[..., iu[0], iu[1]]


def _triu_unpack(v: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d)
    M = np.zeros(v.shape[:-1] + (d, d))
    M[..., iu[0], iu[1]] = v
    M[..., iu[1], iu[0]] = v
    return M


def field_to_dict(cf: CostField) -> tuple[dict, list]:
    """Header dict plus the list of (name, node array) in storage order."""
    header: dict = {"variant": cf.variant, "bounds": list(cf.bounds)}
    if cf.domain is not None:
        header["domain"] = [list(map(float, v)) for v in cf.domain]
    arrays: list = []
    if isinstance(cf, ConstantCost):
        header["c0"] = float(cf.c0)
        return header, arrays
    header["grid"] = cf.grid.to_dict()
    if isinstance(cf, IsotropicCost):
        header.update(c_min=float(cf.c_min), c_max=float(cf.c_max))
        arrays.append(("w", cf.w[..., None]))
    elif isinstance(cf, TensorCost):
        header["eps"] = float(cf.eps)
        arrays.append(("D", _triu_pack(cf.D)))
    elif isinstance(cf, MixedCost):
        arrays += [("a", cf.a[..., None]), ("b", cf.b[..., None]), ("A", _triu_pack(cf.A))]
    elif isinstance(cf, PlausibilityCost):
        header.update(c_lo=float(cf.c_lo), c_hi=float(cf.c_hi), codebook=cf.codebook.tolist())
        arrays.append(("p", cf.p))
    else:
        raise TypeError(f"cannot serialise {type(cf).__name__}")
    header["arrays"] = [{"name": n, "components": int(a.shape[-1])} for n, a in arrays]
    return header, arrays


def field_from_dict(header: dict, arrays: Optional[dict] = None) -> CostField:
    variant = header["variant"]
    domain = tuple(tuple(v) for v in header["domain"]) if header.get("domain") else None
    if variant == "constant":
        return ConstantCost(header["c0"], domain)
    arrays = arrays or {}
    grid = Grid(**header["grid"])
    d = grid.dim

    def get(name):
        if name not in arrays:
            raise FormatError(f"field variant {variant!r} needs array {name!r}")
        return np.asarray(arrays[name], float)

    if variant == "isotropic_whitematter":
        return IsotropicCost(grid, get("w").reshape(grid.shape), header["c_min"], header["c_max"], domain)
    if variant == "tensor":
        return TensorCost(grid, _triu_unpack(get("D").reshape(grid.shape + (-1,)), d), header["eps"], domain)
    if variant == "mixed":
        A = _triu_unpack(get("A").reshape(grid.shape + (-1,)), d)
        return MixedCost(grid, get("a").reshape(grid.shape), get("b").reshape(grid.shape), A, domain)
    if variant == "plausibility":
        return PlausibilityCost(grid, header["codebook"], get("p"), header["c_lo"], header["c_hi"], domain)
    raise FormatError(f"unknown cost field variant {variant!r}")


def write_field(path, cf: CostField) -> None:
    header, arrays = field_to_dict(cf)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]) + struct.pack("<I", len(blob)) + blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_field(path) -> CostField:
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise FormatError(f"{path}: not a cost field file")
    if raw[6] != VERSION:
        raise FormatError(f"{path}: unsupported version {raw[6]}")
    (hlen,) = struct.unpack("<I", raw[7:11])
    header = json.loads(raw[11 : 11 + hlen].decode())
    offset = 11 + hlen
    arrays = {}
    if header["variant"] != "constant":
        nodes = int(np.prod(header["grid"]["shape"]))
        for spec in header["arrays"]:
            count = nodes * spec["components"]
            a = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            arrays[spec["name"]] = a.reshape(tuple(header["grid"]["shape"]) + (spec["components"],))
            offset += 8 * count
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return field_from_dict(header, arrays)
