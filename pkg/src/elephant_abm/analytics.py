"""Home ranges, displacement, conflict clustering, raid statistics and
replicate-count convergence diagnostics."""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .terrain import GridHeader, RasterGrid, TerrainStack

__all__ = [
    "DRY_MONTHS",
    "DEFAULT_EPSILONS",
    "convex_hull",
    "mcp_area",
    "silverman_bandwidth",
    "kde_grid",
    "kde_area",
    "displacement_stats",
    "ClusterLabeling",
    "dbscan",
    "RaidStats",
    "raid_stats",
    "ConvergenceReport",
    "running_cv",
    "convergence_cv",
    "kl_divergence",
    "convergence_kl",
    "occupancy_grid",
]

DRY_MONTHS = frozenset({2, 3, 4, 5})
DEFAULT_EPSILONS = (0.1, 0.075, 0.05, 0.025)


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices by the monotone-chain algorithm.

    Collinear boundary points are dropped.
    """
    pts = sorted(set(map(tuple, _points(points).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _shoelace(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def mcp_area(points) -> float:
    """Minimum convex polygon area in km2 of points given in metres.

    Fewer than three distinct points or a collinear set give 0 with a warning.
    """
    pts = _points(points)
    hull = convex_hull(pts)
    area = _shoelace(hull)
    if len(hull) < 3 or area == 0.0:
        warnings.warn("MCP of fewer than three non-collinear points has zero area", RuntimeWarning)
        return 0.0
    return area / 1e6


def silverman_bandwidth(points) -> np.ndarray:
    """Per-axis Silverman bandwidth ``sigma * n**(-1/6)`` for 2-D data."""
    pts = _points(points)
    n = pts.shape[0]
    sd = pts.std(axis=0, ddof=1)
    return sd * n ** (-1.0 / 6.0)


def kde_grid(points, header: Optional[GridHeader] = None, cellsize: float = 30.0,
             pad_bandwidths: float = 4.0, chunk: int = 2048) -> RasterGrid:
    """Gaussian product-kernel density (per m2) evaluated at cell centres.

    Without ``header`` the grid covers the points' bounding box padded by
    ``pad_bandwidths`` bandwidths on each side.

    Raises
    ------
    ValueError
        If fewer than 10 points are given or either axis has zero spread.
    """
    pts = _points(points)
    if pts.shape[0] < 10:
        raise ValueError("KDE needs at least 10 points")
    h = silverman_bandwidth(pts)
    if not np.all(h > 0):
        raise ValueError("KDE of a point set with zero spread is undefined")
    if header is None:
        lo = pts.min(axis=0) - pad_bandwidths * h
        hi = pts.max(axis=0) + pad_bandwidths * h
        ncols = int(math.ceil((hi[0] - lo[0]) / cellsize))
        nrows = int(math.ceil((hi[1] - lo[1]) / cellsize))
        header = GridHeader(ncols, nrows, float(lo[0]), float(lo[1]), cellsize, None)
    xc, _ = header.cell_center(0, np.arange(header.ncols))
    _, yc = header.cell_center(np.arange(header.nrows), 0)
    dens = np.zeros(header.shape)
    norm_x = 1.0 / (math.sqrt(2 * math.pi) * h[0])
    norm_y = 1.0 / (math.sqrt(2 * math.pi) * h[1])
    for s in range(0, pts.shape[0], chunk):
        p = pts[s:s + chunk]
        kx = np.exp(-0.5 * ((xc[:, None] - p[None, :, 0]) / h[0]) ** 2) * norm_x
        ky = np.exp(-0.5 * ((yc[:, None] - p[None, :, 1]) / h[1]) ** 2) * norm_y
        dens += ky @ kx.T
    dens /= pts.shape[0]
    return RasterGrid(header, dens)


def kde_area(points, levels: Sequence[float] = (0.9, 0.95, 1.0), header: Optional[GridHeader] = None,
             cellsize: float = 30.0, grid: Optional[RasterGrid] = None) -> dict:
    """Home-range area (km2) enclosing each probability level of the KDE.

    Cell masses are normalised to the grid total. Level ``q < 1`` is the
    area of the fewest highest-density cells whose mass reaches ``q``;
    level 1 is the area of every cell whose mass exceeds machine epsilon.
    """
    grid = kde_grid(points, header, cellsize) if grid is None else grid
    cs = grid.header.cellsize
    mass = (grid.data * cs * cs).ravel()
    mass = mass / mass.sum()
    ordered = np.sort(mass)[::-1]
    cum = np.cumsum(ordered)
    cell_km2 = (cs / 1000.0) ** 2
    out = {}
    for q in levels:
        if not 0 < q <= 1:
            raise ValueError(f"level {q} outside (0, 1]")
        if q >= 1.0:
            k = int(np.count_nonzero(mass > np.finfo(float).eps))
        else:
            k = int(np.searchsorted(cum, q, side="left")) + 1
        out[q] = k * cell_km2
    return out


def displacement_stats(trajectory, ticks_per_day: int = 288) -> tuple[np.ndarray, np.ndarray]:
    """Daily path length (diel) and first-to-last distance (net), in km.

    ``trajectory`` is an ``(n, 2)`` array of fixes in metres, one per tick.
    A trailing partial day is included.
    """
    pts = _points(trajectory)
    diel, net = [], []
    for s in range(0, pts.shape[0], ticks_per_day):
        day = pts[s:s + ticks_per_day]
        steps = np.hypot(*np.diff(day, axis=0).T) if len(day) > 1 else np.zeros(0)
        diel.append(steps.sum() / 1000.0)
        net.append(float(np.hypot(*(day[-1] - day[0]))) / 1000.0)
    return np.array(diel), np.array(net)


@dataclass
class ClusterLabeling:
    """DBSCAN output: ``labels`` are cluster ids from 0, or -1 for noise."""

    labels: np.ndarray
    core: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max() + 1) if self.labels.size else 0


def dbscan(points, eps: float, min_pts: int) -> ClusterLabeling:
    """Density-based clustering; a point's neighbourhood includes itself.

    Clusters are numbered in the order their first core point appears, and
    a border point reachable from several clusters joins the first one that
    reaches it.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    pts = _points(points)
    n = pts.shape[0]
    labels = np.full(n, -2, dtype=np.int64)
    if n == 0:
        return ClusterLabeling(labels, np.zeros(0, dtype=bool))
    tree = cKDTree(pts)
    neighbours = tree.query_ball_point(pts, r=eps, return_sorted=True)
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    cid = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        if not core[i]:
            labels[i] = -1
            continue
        labels[i] = cid
        queue = deque(neighbours[i])
        while queue:
            j = queue.popleft()
            if labels[j] == -1:
                labels[j] = cid
            if labels[j] != -2:
                continue
            labels[j] = cid
            if core[j]:
                queue.extend(neighbours[j])
        cid += 1
    return ClusterLabeling(labels, core)


@dataclass
class RaidStats:
    """Raid and feeding statistics of a batch."""

    raid_probability: float
    reentry_probability: float
    mean_episodes: float
    deprived_raid_fraction: float
    starvation_probability: float
    n_replicates: int
    n_episodes: int
    intake_histogram: dict = field(default_factory=dict)


def _deprivation_at(days: Sequence[Mapping], tick: int, ddmi: float, ticks_per_day: int) -> int:
    d = tick // ticks_per_day
    if d < len(days):
        return int(days[d]["food_deprivation_days"])
    if not days:
        return 0
    last = days[-1]
    return int(last["food_deprivation_days"]) + 1 if last["intake_kg"] < ddmi else 0


def raid_stats(batch: Sequence, stack: Optional[TerrainStack] = None, month: Optional[int] = None,
               ddmi: float = 68.0, ticks_per_day: int = 288, bin_kg: float = 10.0,
               max_kg: float = 300.0) -> RaidStats:
    """Summarise raiding and starvation over replicate outputs.

    Each item needs ``episodes`` (list of ``(first_tick, last_tick)``) and
    ``days`` (daily records with ``intake_kg``, ``forest_intake_kg`` and
    ``food_deprivation_days``).

    Raises
    ------
    ValueError
        On an empty batch.
    """
    if len(batch) == 0:
        raise ValueError("raid statistics need at least one replicate")
    n = len(batch)
    counts = np.array([len(r.episodes) for r in batch])
    raiders = counts >= 1
    raid_p = float(raiders.mean())
    reentry = float((counts[raiders] >= 2).mean()) if raiders.any() else 0.0
    onsets = [
        _deprivation_at(r.days, a, ddmi, ticks_per_day) for r in batch for a, _ in r.episodes
    ]
    deprived = float(np.mean([o > 0 for o in onsets])) if onsets else 0.0
    forest = np.array([d["forest_intake_kg"] for r in batch for d in r.days], dtype=float)
    total = np.array([d["intake_kg"] for r in batch for d in r.days], dtype=float)
    starvation = float((forest < ddmi).mean()) if forest.size else 0.0
    edges = np.append(np.arange(0.0, max_kg + bin_kg, bin_kg), np.inf)
    hist = np.histogram(total, bins=edges)[0].tolist() if total.size else [0] * (len(edges) - 1)
    season = "dry" if month in DRY_MONTHS else "wet"
    histogram = {
        "bin_kg": bin_kg,
        "dry": hist if season == "dry" else [0] * len(hist),
        "wet": hist if season == "wet" else [0] * len(hist),
    }
    return RaidStats(raid_p, reentry, float(counts.mean()), deprived, starvation, n,
                     int(counts.sum()), histogram)


@dataclass
class ConvergenceReport:
    """Convergence curve over replicate counts and the resulting minimum counts.

    ``sizes[i]`` is the replicate count at which ``curve[i]`` was computed.
    ``nmin`` maps each epsilon to the smallest count after which the
    criterion holds for every larger count observed.
    """

    metric: str
    sizes: np.ndarray
    curve: np.ndarray
    nmin: dict
    flagged: bool = False
    note: str = ""

    def table(self) -> list[dict]:
        return [{"epsilon": e, "nmin": self.nmin[e]} for e in self.nmin]


def running_cv(samples) -> np.ndarray:
    """Coefficient of variation of the first n samples, for n = 2..N."""
    x = np.asarray(samples, dtype=np.float64)
    n = np.arange(1, x.size + 1)
    csum = np.cumsum(x)
    mean = csum / n
    dev = np.cumsum((x - x[0]) ** 2) - (csum - n * x[0]) ** 2 / n
    var = np.maximum(dev, 0.0)[1:] / (n[1:] - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.sqrt(var) / mean[1:]
    # exact zero for constant prefixes
    const = np.maximum.accumulate(np.abs(x - x[0]))[1:] == 0
    cv[const & (mean[1:] != 0)] = 0.0
    return cv


def _nmin(sizes: np.ndarray, deltas: np.ndarray, eps: float, floor: int) -> int:
    """Smallest size after which every later delta stays within ``eps``."""
    bad = np.flatnonzero(deltas > eps)
    if bad.size == 0:
        return int(floor)
    return int(sizes[bad[-1]])


def convergence_cv(samples, epsilons: Sequence[float] = DEFAULT_EPSILONS) -> ConvergenceReport:
    """Coefficient-of-variation stability over growing replicate counts.

    A zero mean at any prefix makes the CV undefined; the report is then
    flagged and ``nmin`` entries are ``None``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("convergence needs at least two samples")
    sizes = np.arange(2, x.size + 1)
    curve = running_cv(x)
    if not np.all(np.isfinite(curve)):
        return ConvergenceReport("cv", sizes, curve, {e: None for e in epsilons}, True,
                                 "coefficient of variation undefined for a zero mean")
    deltas = np.abs(np.diff(curve))
    # deltas[i] is the change on arriving at sizes[i + 1]
    nmin = {e: _nmin(sizes[1:], deltas, e, 2) for e in epsilons}
    return ConvergenceReport("cv", sizes, curve, nmin)


def kl_divergence(p, q, smoothing: float = 1e-12) -> float:
    """KL(p || q) in nats after adding ``smoothing`` to every cell and renormalising."""
    p = np.asarray(p, dtype=np.float64).ravel() + smoothing
    q = np.asarray(q, dtype=np.float64).ravel() + smoothing
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def convergence_kl(grids, epsilons: Sequence[float] = DEFAULT_EPSILONS, lag: int = 1,
                   smoothing: float = 1e-12) -> ConvergenceReport:
    """KL divergence between pooled occupancy of n and n - lag replicates.

    ``grids`` stacks one occupancy grid (counts or densities) per replicate.
    """
    g = np.asarray(grids, dtype=np.float64)
    n = g.shape[0]
    if n < lag + 1:
        raise ValueError("need more replicates than the lag")
    flat = g.reshape(n, -1)
    totals = flat.sum(axis=1, keepdims=True)
    norm = np.divide(flat, totals, out=np.zeros_like(flat), where=totals > 0)
    pooled = np.cumsum(norm, axis=0)
    sizes = np.arange(lag + 1, n + 1)
    curve = np.array([kl_divergence(pooled[m - 1], pooled[m - 1 - lag], smoothing) for m in sizes])
    nmin = {e: _nmin(sizes, curve, e, max(2, lag + 1)) for e in epsilons}
    return ConvergenceReport("kl", sizes, curve, nmin)


def occupancy_grid(rows, cols, shape) -> np.ndarray:
    """Visit counts per cell from row and column indices of a trajectory."""
    counts = np.zeros(shape, dtype=np.float64)
    np.add.at(counts, (np.asarray(rows), np.asarray(cols)), 1.0)
    return counts
