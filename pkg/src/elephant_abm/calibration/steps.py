"""Relocation tracks and their step-length / turning-angle decomposition."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import distributions as dist

__all__ = [
    "NOMINAL_INTERVAL_S",
    "RelocationTrack",
    "StepSeries",
    "extract_steps",
    "wrap_angle",
    "read_track_csv",
    "write_track_csv",
    "simulate_series",
    "track_from_series",
    "REFERENCE_MODEL",
]

NOMINAL_INTERVAL_S = 300.0
_GAP_TOLERANCE = 0.5


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return math.pi - np.remainder(math.pi - np.asarray(a, dtype=float), 2.0 * math.pi)


@dataclass(frozen=True)
class RelocationTrack:
    """Ordered fixes; ``t`` in seconds since the first fix, ``x``/``y`` in metres."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    origin: Optional[datetime] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.shape == x.shape == y.shape) or t.ndim != 1:
            raise ValueError("t, x and y must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def regular(cls, x: Sequence[float], y: Sequence[float], interval_s: float = NOMINAL_INTERVAL_S):
        n = len(x)
        return cls(np.arange(n) * interval_s, np.asarray(x, float), np.asarray(y, float))


@dataclass(frozen=True)
class StepSeries:
    """Step lengths in km, turning angles in radians.

    ``starts[i]`` marks the first step of a contiguous segment; the turning
    angle there is NaN because no preceding heading exists.
    """

    lengths: np.ndarray
    turns: np.ndarray
    starts: np.ndarray

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        turns = np.asarray(self.turns, dtype=float)
        starts = np.asarray(self.starts, dtype=bool).copy()
        if not (lengths.shape == turns.shape == starts.shape) or lengths.ndim != 1:
            raise ValueError("lengths, turns and starts must be 1-D arrays of equal length")
        if np.any(lengths < 0) or not np.all(np.isfinite(lengths)):
            raise ValueError("step lengths must be finite and non-negative")
        ok = ~np.isnan(turns)
        if np.any(turns[ok] <= -math.pi) or np.any(turns[ok] > math.pi):
            raise ValueError("turning angles must lie in (-pi, pi]")
        if starts.size:
            starts[0] = True
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "turns", turns)
        object.__setattr__(self, "starts", starts)

    def __len__(self) -> int:
        return self.lengths.size

    @classmethod
    def single(cls, lengths, turns):
        lengths = np.asarray(lengths, dtype=float)
        starts = np.zeros(lengths.size, dtype=bool)
        return cls(lengths, turns, starts)


def extract_steps(track: RelocationTrack, interval_s: float = NOMINAL_INTERVAL_S) -> StepSeries:
    """Decompose a track into steps and turns.

    An interval deviating from ``interval_s`` by more than half of it is a
    gap: no step is formed across it and the next step starts a new
    segment. Turning angles are counter-clockwise positive and undefined
    (NaN) when either adjoining step has zero length.
    """
    if len(track) < 3:
        raise ValueError(f"need at least 3 fixes, got {len(track)}")
    dt = np.diff(track.t)
    good = np.abs(dt - interval_s) <= _GAP_TOLERANCE * interval_s
    dx = np.diff(track.x)[good]
    dy = np.diff(track.y)[good]
    idx = np.flatnonzero(good)
    lengths = np.hypot(dx, dy) / 1000.0
    starts = np.ones(idx.size, dtype=bool)
    starts[1:] = np.diff(idx) != 1
    heading = np.arctan2(dy, dx)
    turns = np.full(idx.size, np.nan)
    if idx.size > 1:
        turns[1:] = wrap_angle(np.diff(heading))
        zero = lengths == 0
        turns[1:][zero[1:] | zero[:-1]] = np.nan
    turns[starts] = np.nan
    return StepSeries(lengths, turns, starts)


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def read_track_csv(path) -> RelocationTrack:
    """Read ``timestamp,x,y`` rows (ISO-8601 timestamps, projected metres)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp", "x", "y"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                rows.append((_parse_time(row["timestamp"]), float(row["x"]), float(row["y"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no fixes")
    origin = rows[0][0]
    t = np.array([(r[0] - origin).total_seconds() for r in rows])
    return RelocationTrack(t, np.array([r[1] for r in rows]), np.array([r[2] for r in rows]), origin)


def write_track_csv(track: RelocationTrack, path, origin: Optional[datetime] = None) -> Path:
    origin = origin or track.origin or datetime(2020, 1, 1)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "x", "y"])
        for t, x, y in zip(track.t, track.x, track.y):
            w.writerow([(origin + timedelta(seconds=float(t))).isoformat(), repr(float(x)), repr(float(y))])
    return path


# Reference two-state model: state 0 encamped, state 1 exploratory.
REFERENCE_MODEL = {
    "transition": ((0.8775, 0.1225), (0.0904, 0.9096)),
    "step_family": "gamma",
    "step_params": ((0.0040, 0.0034), (0.0398, 0.0378)),
    "turn_family": "vonmises",
    "turn_params": ((-3.0232, 0.3336), (-0.0366, 1.5202)),
}


def simulate_series(n: int, rng=None, model: Optional[dict] = None,
                    initial: Optional[Sequence[float]] = None) -> tuple[StepSeries, np.ndarray]:
    """Draw ``n`` steps from a two-state HMM; returns the series and true states."""
    rng = np.random.default_rng(rng)
    m = dict(REFERENCE_MODEL if model is None else model)
    gam = np.asarray(m["transition"], dtype=float)
    if initial is None:
        # stationary distribution of a 2x2 chain
        p12, p21 = gam[0, 1], gam[1, 0]
        initial = (p21 / (p12 + p21), p12 / (p12 + p21))
    states = np.empty(n, dtype=np.intp)
    u = rng.random(n)
    states[0] = 0 if u[0] < initial[0] else 1
    for t in range(1, n):
        states[t] = 0 if u[t] < gam[states[t - 1], 0] else 1
    lengths = np.empty(n)
    turns = np.empty(n)
    for s in (0, 1):
        sel = states == s
        k = int(sel.sum())
        lengths[sel] = dist.sample_steps(m["step_family"], m["step_params"][s], k, rng)
        turns[sel] = dist.sample_turns(m["turn_family"], m["turn_params"][s], k, rng)
    turns = wrap_angle(turns)
    turns[0] = np.nan
    return StepSeries.single(lengths, turns), states


def track_from_series(series: StepSeries, x0: float = 0.0, y0: float = 0.0, heading0: float = 0.0,
                      interval_s: float = NOMINAL_INTERVAL_S) -> RelocationTrack:
    """Integrate an unsegmented series into a regular track (heading in math convention)."""
    n = len(series)
    heading = heading0 + np.concatenate([[0.0], np.nan_to_num(series.turns[1:])]).cumsum()
    x = np.concatenate([[x0], x0 + np.cumsum(series.lengths * 1000.0 * np.cos(heading))])
    y = np.concatenate([[y0], y0 + np.cumsum(series.lengths * 1000.0 * np.sin(heading))])
    return RelocationTrack(np.arange(n + 1) * interval_s, x, y)
