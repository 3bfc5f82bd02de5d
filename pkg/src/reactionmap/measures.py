"""Stimulus and reaction measures built from regional activity.

ROI scores are turned into atomic measures by mass normalisation; scores
themselves come either from a table or from integrating baseline-corrected
regional time series over a temporal window.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import AllZeroScores, FormatError, LengthMismatch, WindowOutOfRange

MASS_RTOL = 1e-12


def _as_points(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts.reshape(0, 2)
    return pts


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite nonnegative weighted point set.

    ``labels`` keeps ROI identifiers aligned with the atoms; zero-mass atoms
    are kept so indexing stays stable between the source and target measure.
    """

    points: np.ndarray
    masses: np.ndarray
    total_mass: float
    labels: tuple = ()
    bbox: Optional[tuple] = None

    def __post_init__(self):
        pts = _as_points(self.points)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "total_mass", float(self.total_mass))
        if len(pts) != len(masses):
            raise LengthMismatch(f"{len(pts)} points but {len(masses)} masses")
        if self.labels and len(self.labels) != len(masses):
            raise LengthMismatch("labels must match atoms")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        s = float(masses.sum())
        if abs(s - self.total_mass) > MASS_RTOL * max(abs(self.total_mass), 1.0):
            raise ValueError(f"sum of masses {s!r} != total_mass {self.total_mass!r}")
        if self.bbox is not None and len(pts):
            lo, hi = (np.asarray(v, dtype=float) for v in self.bbox)
            if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
                raise ValueError("atom outside the domain bounding box")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.masses)


@dataclass(frozen=True)
class BalancedPair:
    source: AtomicMeasure
    target: AtomicMeasure


@dataclass(frozen=True)
class BalanceReport:
    source_mass: float
    target_mass: float
    mismatch: float
    passed: bool


@dataclass(frozen=True)
class RoiTimeSeries:
    """Uniformly sampled regional signals, one row per ROI.

    The sample ``j`` sits at ``t_start + j * time_step``.
    """

    roi_positions: np.ndarray
    samples: np.ndarray
    time_step: float
    baseline: np.ndarray = None
    t_start: float = 0.0
    labels: tuple = ()

    def __post_init__(self):
        pos = _as_points(self.roi_positions)
        y = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if y.shape[0] != len(pos):
            raise LengthMismatch(f"{y.shape[0]} signal rows for {len(pos)} ROIs")
        base = np.zeros(len(pos)) if self.baseline is None else np.asarray(self.baseline, float).reshape(-1)
        if len(base) != len(pos):
            raise LengthMismatch("baseline must have one value per ROI")
        object.__setattr__(self, "roi_positions", pos)
        object.__setattr__(self, "samples", y)
        object.__setattr__(self, "baseline", base)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.time_step * np.arange(self.samples.shape[1])

    @property
    def corrected(self) -> np.ndarray:
        return self.samples - self.baseline[:, None]

    def with_baseline_window(self, t0: float, t1: float) -> "RoiTimeSeries":
        """Set the baseline to the per-ROI mean over a pre-stimulus window."""
        i0, i1 = self._snap(t0, t1)
        base = self.samples[:, i0 : i1 + 1].mean(axis=1)
        return RoiTimeSeries(self.roi_positions, self.samples, self.time_step, base, self.t_start, self.labels)

    def _snap(self, t0: float, t1: float) -> tuple[int, int]:
        n = self.samples.shape[1]
        t_end = self.t_start + (n - 1) * self.time_step
        half = 0.5 * self.time_step
        if not t0 < t1:
            raise WindowOutOfRange(f"empty window [{t0}, {t1}]")
        if t0 < self.t_start - half or t1 > t_end + half:
            raise WindowOutOfRange(f"window [{t0}, {t1}] outside recording [{self.t_start}, {t_end}]")
        i0 = int(np.clip(np.rint((t0 - self.t_start) / self.time_step), 0, n - 1))
        i1 = int(np.clip(np.rint((t1 - self.t_start) / self.time_step), 0, n - 1))
        return i0, i1


def measure_from_scores(scores, positions, m: float, labels: Sequence = (), bbox=None) -> AtomicMeasure:
    """Normalise nonnegative ROI scores into an atomic measure of mass ``m``.

    The atom at ``positions[i]`` receives ``m * scores[i] / sum(scores)``.
    """
    a = np.asarray(scores, dtype=float).reshape(-1)
    pts = _as_points(positions)
    if len(a) != len(pts):
        raise LengthMismatch(f"{len(a)} scores for {len(pts)} positions")
    if np.any(a < 0):
        raise ValueError("scores must be nonnegative")
    if m <= 0:
        raise ValueError("total mass must be positive")
    total = a.sum()
    if total <= 0:
        raise AllZeroScores("all scores are zero; the measure is undefined")
    masses = m * (a / total)
    # absorb the normalisation round-off into the largest atom so the re-sum is m
    drift = m - masses.sum()
    if drift:
        masses[np.argmax(masses)] += drift
    return AtomicMeasure(pts, masses, float(m), tuple(labels), bbox)


def score_from_window(ts: RoiTimeSeries, roi: int, t0: float, t1: float, mode: str = "positive_part") -> float:
    """Trapezoidal integral of the rectified corrected signal over ``[t0, t1]``.

    ``mode="positive_part"`` integrates ``max(y - base, 0)``;
    ``mode="absolute"`` integrates ``|y - base|`` (source-space EEG/MEG).
    Window ends snap to the nearest recorded sample.
    """
    i0, i1 = ts._snap(t0, t1)
    y = ts.corrected[roi, i0 : i1 + 1]
    if mode == "positive_part":
        f = np.maximum(y, 0.0)
    elif mode == "absolute":
        f = np.abs(y)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if len(f) < 2:
        return 0.0
    return float(np.trapezoid(f, dx=ts.time_step))


def scores_from_window(ts: RoiTimeSeries, t0: float, t1: float, mode: str = "positive_part") -> np.ndarray:
    return np.array([score_from_window(ts, i, t0, t1, mode) for i in range(len(ts.roi_positions))])


def validate_balanced(pair: BalancedPair) -> BalanceReport:
    mp, mm = pair.source.total_mass, pair.target.total_mass
    scale = max(mp, mm)
    mismatch = abs(mp - mm) / scale if scale > 0 else 0.0
    return BalanceReport(mp, mm, mismatch, mismatch <= MASS_RTOL)


# --- file ingest -----------------------------------------------------------


def read_roi_table(path) -> dict:
    """Read ``roi_id, x, y[, z], score_stim, score_react`` rows."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise FormatError(f"{path}: empty ROI table")
    header = [h.strip() for h in rows[0]]
    coords = [c for c in ("x", "y", "z") if c in header]
    need = ["roi_id", "score_stim", "score_react"]
    missing = [c for c in need + ["x", "y"] if c not in header]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}")
    idx = {h: i for i, h in enumerate(header)}
    ids, pos, stim, react = [], [], [], []
    for r in rows[1:]:
        ids.append(r[idx["roi_id"]].strip())
        pos.append([float(r[idx[c]]) for c in coords])
        stim.append(float(r[idx["score_stim"]]))
        react.append(float(r[idx["score_react"]]))
    return {"ids": ids, "positions": np.array(pos), "score_stim": np.array(stim), "score_react": np.array(react)}


def read_timeseries(path) -> RoiTimeSeries:
    """Read a time-series file.

    Header lines ``# key=value`` give ``time_step`` (required), ``t_start``
    and ``baseline_window=t0,t1``. The table has ``roi_id, x, y[, z]`` and
    then one column per sample.
    """
    meta: dict = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s.lstrip("#").strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            rows.append(next(csv.reader([s])))
    if "time_step" not in meta:
        raise FormatError(f"{path}: header lacks time_step")
    header = [h.strip() for h in rows[0]]
    coords = [c for c in ("x", "y", "z") if c in header]
    first = len(coords) + 1
    ids = [r[0].strip() for r in rows[1:]]
    pos = np.array([[float(v) for v in r[1:first]] for r in rows[1:]])
    y = np.array([[float(v) for v in r[first:]] for r in rows[1:]])
    ts = RoiTimeSeries(pos, y, float(meta["time_step"]), None, float(meta.get("t_start", 0.0)), tuple(ids))
    if "baseline_window" in meta:
        b0, b1 = (float(v) for v in meta["baseline_window"].split(","))
        ts = ts.with_baseline_window(b0, b1)
    return ts


def write_measures(path, pair: BalancedPair) -> None:
    def enc(mu: AtomicMeasure) -> dict:
        return {
            "labels": list(mu.labels),
            "points": mu.points.tolist(),
            "masses": mu.masses.tolist(),
            "total_mass": mu.total_mass,
        }

    rep = validate_balanced(pair)
    doc = {
        "format": "reactionmap-measures/1",
        "source": enc(pair.source),
        "target": enc(pair.target),
        "balance": {"mismatch": rep.mismatch, "passed": rep.passed},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_measures(path) -> BalancedPair:
    doc = json.loads(Path(path).read_text())

    def dec(d: dict) -> AtomicMeasure:
        return AtomicMeasure(np.array(d["points"]), np.array(d["masses"]), d["total_mass"], tuple(d["labels"]))

    return BalancedPair(dec(doc["source"]), dec(doc["target"]))
