"""Elitist multi-objective search with nondominated sorting and crowding distance.

All objectives are minimised. The generation loop is sequential and
deterministic for a fixed seed; objective evaluations may be mapped over
a pool through ``map_fn`` because their order of submission is fixed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "GaConfig",
    "ParetoFront",
    "EvaluationError",
    "dominates",
    "nondominated_sort",
    "crowding_distance",
    "sbx_crossover",
    "polynomial_mutation",
    "nsga2",
]


class EvaluationError(RuntimeError):
    """An objective evaluation raised; ``vector`` is the offending decision vector."""

    def __init__(self, vector: np.ndarray, cause: BaseException):
        super().__init__(f"evaluation failed at {np.asarray(vector).tolist()}: {cause!r}")
        self.vector = np.asarray(vector)
        self.cause = cause


@dataclass(frozen=True)
class GaConfig:
    """Search settings.

    ``mutation_prob`` of ``None`` means one over the number of variables.
    """

    pop_size: int = 50
    generations: int = 100
    crossover_prob: float = 0.9
    eta_crossover: float = 15.0
    mutation_prob: Optional[float] = None
    eta_mutation: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 4 or self.pop_size % 2:
            raise ValueError("pop_size must be an even number >= 4")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ParetoFront:
    """Mutually nondominated decision vectors and their objective values."""

    decisions: np.ndarray
    objectives: np.ndarray
    names: tuple = ()
    objective_names: tuple = ()

    def __len__(self) -> int:
        return self.decisions.shape[0]

    def to_csv(self, path) -> Path:
        path = Path(path)
        nv, no = self.decisions.shape[1], self.objectives.shape[1]
        names = list(self.names) or [f"x{i}" for i in range(nv)]
        onames = list(self.objective_names) or [f"f{i}" for i in range(no)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + onames)
            for d, o in zip(self.decisions, self.objectives):
                w.writerow([repr(float(v)) for v in d] + [repr(float(v)) for v in o])
        return path


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True when ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_sort(objectives: np.ndarray) -> list[np.ndarray]:
    """Partition row indices into successive nondominated fronts."""
    f = np.asarray(objectives, dtype=float)
    n = f.shape[0]
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(counts == 0)
    assigned = np.zeros(n, dtype=bool)
    while current.size:
        fronts.append(current)
        assigned[current] = True
        counts = counts - dom[current].sum(axis=0)
        current = np.flatnonzero((counts == 0) & ~assigned)
    return fronts


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; boundary members get +inf."""
    f = np.asarray(objectives, dtype=float)
    n, m = f.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
        return d
    for k in range(m):
        order = np.argsort(f[:, k], kind="stable")
        lo, hi = f[order[0], k], f[order[-1], k]
        d[order[0]] = d[order[-1]] = np.inf
        if hi == lo:
            continue
        d[order[1:-1]] += (f[order[2:], k] - f[order[:-2], k]) / (hi - lo)
    return d


def sbx_crossover(p1: np.ndarray, p2: np.ndarray, lower: np.ndarray, upper: np.ndarray, eta: float,
                  prob: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Bounded simulated binary crossover, applied per variable with probability 0.5."""
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > prob:
        return c1, c2
    for i in range(p1.size):
        u_apply, u = rng.random(), rng.random()
        if u_apply > 0.5 or abs(p1[i] - p2[i]) < 1e-14:
            continue
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        lo, hi = lower[i], upper[i]
        span = y2 - y1
        out = []
        for beta in (1.0 + 2.0 * (y1 - lo) / span, 1.0 + 2.0 * (hi - y2) / span):
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u <= 1.0 / alpha:
                bq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            out.append(bq)
        a = 0.5 * ((y1 + y2) - out[0] * span)
        b = 0.5 * ((y1 + y2) + out[1] * span)
        a, b = min(max(a, lo), hi), min(max(b, lo), hi)
        if rng.random() < 0.5:
            a, b = b, a
        c1[i], c2[i] = a, b
    return c1, c2


def polynomial_mutation(x: np.ndarray, lower: np.ndarray, upper: np.ndarray, eta: float, prob: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation of each variable with probability ``prob``."""
    y = x.copy()
    for i in range(x.size):
        if rng.random() >= prob:
            continue
        lo, hi = lower[i], upper[i]
        span = hi - lo
        if span <= 0:
            continue
        d1, d2 = (y[i] - lo) / span, (hi - y[i]) / span
        u = rng.random()
        p = 1.0 / (eta + 1.0)
        if u < 0.5:
            v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
            dq = v ** p - 1.0
        else:
            v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - v ** p
        y[i] = min(max(y[i] + dq * span, lo), hi)
    return y


def _evaluate(evaluate, pop: np.ndarray, map_fn) -> np.ndarray:
    def safe(x):
        try:
            return np.asarray(evaluate(x), dtype=float)
        except EvaluationError:
            raise
        except Exception as exc:
            raise EvaluationError(x, exc) from exc

    rows = list(map_fn(safe, list(pop)))
    out = np.vstack(rows)
    if out.ndim != 2 or out.shape[1] < 2:
        raise ValueError("evaluate must return at least two objectives")
    return out


def _rank_and_crowd(objs: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    fronts = nondominated_sort(objs)
    rank = np.empty(objs.shape[0], dtype=np.intp)
    crowd = np.empty(objs.shape[0])
    for r, fr in enumerate(fronts):
        rank[fr] = r
        crowd[fr] = crowding_distance(objs[fr])
    return rank, crowd, fronts


def _truncate(front: np.ndarray, objs: np.ndarray, keep: int) -> np.ndarray:
    """Drop the most crowded member one at a time, recomputing distances after each removal."""
    members = list(front)
    while len(members) > keep:
        cd = crowding_distance(objs[members])
        members.pop(int(np.argmin(cd)))
    return np.asarray(members, dtype=np.intp)


def _tournament(rank, crowd, rng) -> int:
    a, b = rng.integers(0, rank.size, 2)
    if rank[a] != rank[b]:
        return int(a if rank[a] < rank[b] else b)
    if crowd[a] != crowd[b]:
        return int(a if crowd[a] > crowd[b] else b)
    return int(a if rng.random() < 0.5 else b)


def nsga2(evaluate: Callable[[np.ndarray], Sequence[float]], bounds: Sequence[tuple[float, float]],
          config: GaConfig = GaConfig(), rng=None, map_fn: Callable = map,
          names: Sequence[str] = (), objective_names: Sequence[str] = (),
          callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None) -> ParetoFront:
    """Minimise a vector objective over box ``bounds``.

    Parameters
    ----------
    evaluate
        Maps a decision vector to an objective vector (length >= 2).
    bounds
        ``(low, high)`` per decision variable; all finite.
    rng
        Seed or Generator; defaults to ``config.seed``.
    map_fn
        ``map``-compatible callable for evaluating a population.

    Returns
    -------
    ParetoFront
        First front of the final population with duplicate rows removed.
    """
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or not np.all(np.isfinite(b)) or np.any(b[:, 0] > b[:, 1]):
        raise ValueError("bounds must be finite (low, high) pairs")
    lower, upper = b[:, 0], b[:, 1]
    nvar = b.shape[0]
    rng = np.random.default_rng(config.seed if rng is None else rng)
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / nvar
    n = config.pop_size

    pop = lower + rng.random((n, nvar)) * (upper - lower)
    objs = _evaluate(evaluate, pop, map_fn)
    rank, crowd, _ = _rank_and_crowd(objs)
    for gen in range(config.generations):
        children = []
        while len(children) < n:
            p1 = pop[_tournament(rank, crowd, rng)]
            p2 = pop[_tournament(rank, crowd, rng)]
            c1, c2 = sbx_crossover(p1, p2, lower, upper, config.eta_crossover, config.crossover_prob, rng)
            children.append(polynomial_mutation(c1, lower, upper, config.eta_mutation, pm, rng))
            children.append(polynomial_mutation(c2, lower, upper, config.eta_mutation, pm, rng))
        kids = np.vstack(children[:n])
        kid_objs = _evaluate(evaluate, kids, map_fn)
        allpop = np.vstack([pop, kids])
        allobj = np.vstack([objs, kid_objs])
        _, _, fronts = _rank_and_crowd(allobj)
        chosen = []
        for fr in fronts:
            if len(chosen) + fr.size <= n:
                chosen.extend(fr.tolist())
            else:
                chosen.extend(_truncate(fr, allobj, n - len(chosen)).tolist())
            if len(chosen) == n:
                break
        pop, objs = allpop[chosen], allobj[chosen]
        rank, crowd, _ = _rank_and_crowd(objs)
        if callback is not None:
            callback(gen, pop, objs)
    first = np.flatnonzero(rank == 0)
    _, keep = np.unique(pop[first], axis=0, return_index=True)
    idx = first[np.sort(keep)]
    return ParetoFront(pop[idx].copy(), objs[idx].copy(), tuple(names), tuple(objective_names))
