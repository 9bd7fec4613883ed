"""Movement statistics used as calibration targets, with bootstrap intervals."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..analytics import displacement_stats, mcp_area

__all__ = [
    "STATISTICS",
    "Estimate",
    "MovementObjectives",
    "movement_objectives",
    "hinge_penalties",
    "CALIBRATION_VARIABLES",
    "apply_variables",
    "simulation_objective",
]

STATISTICS = ("mcp_km2", "diel_km", "net_km")


@dataclass(frozen=True)
class Estimate:
    value: float
    low: float
    high: float

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.high - self.low)

    def to_dict(self) -> dict:
        return {"value": self.value, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class MovementObjectives:
    """Monthly MCP area, mean diel and mean daily net displacement."""

    mcp_km2: Estimate
    diel_km: Estimate
    net_km: Estimate

    def values(self) -> np.ndarray:
        return np.array([getattr(self, s).value for s in STATISTICS])

    def to_dict(self) -> dict:
        return {s: getattr(self, s).to_dict() for s in STATISTICS}


def _quiet_mcp(points: np.ndarray) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return mcp_area(points)


def _per_day(traj: np.ndarray, ticks_per_day: int) -> list[np.ndarray]:
    return [traj[s:s + ticks_per_day] for s in range(0, traj.shape[0], ticks_per_day)]


def movement_objectives(trajectories: Sequence, ticks_per_day: int = 288, n_boot: int = 1000,
                        confidence: float = 0.95, rng=0) -> MovementObjectives:
    """Three movement statistics with percentile bootstrap intervals.

    Each trajectory is an ``(n, 2)`` array of metre fixes at one per tick.
    The MCP statistic is the mean over trajectories of each trajectory's
    convex-hull area; displacements are averaged over all days. With
    several trajectories the bootstrap resamples whole trajectories; a
    single trajectory is resampled by days, its hull taken over the pooled
    fixes of the drawn days.
    """
    trajs = [np.asarray(t, dtype=float).reshape(-1, 2) for t in trajectories]
    if not trajs or any(t.shape[0] == 0 for t in trajs):
        raise ValueError("trajectories must be nonempty")
    rng = np.random.default_rng(rng)
    alpha = 0.5 * (1.0 - confidence)

    if len(trajs) > 1:
        units = []
        for t in trajs:
            diel, net = displacement_stats(t, ticks_per_day)
            units.append((_quiet_mcp(t), diel.sum(), net.sum(), diel.size))
        arr = np.array(units)

        def stat(idx):
            a = arr[idx]
            return np.array([a[:, 0].mean(), a[:, 1].sum() / a[:, 3].sum(), a[:, 2].sum() / a[:, 3].sum()])
    else:
        days = _per_day(trajs[0], ticks_per_day)
        diel, net = displacement_stats(trajs[0], ticks_per_day)

        def stat(idx):
            if len(idx) == len(days) and np.array_equal(idx, np.arange(len(days))):
                pts = trajs[0]
            else:
                pts = np.vstack([days[i] for i in idx])
            return np.array([_quiet_mcp(pts), diel[idx].mean(), net[idx].mean()])

    n_units = len(trajs) if len(trajs) > 1 else len(_per_day(trajs[0], ticks_per_day))
    point = stat(np.arange(n_units))
    boots = np.array([stat(rng.integers(0, n_units, n_units)) for _ in range(n_boot)]) if n_boot else point[None]
    low = np.quantile(boots, alpha, axis=0)
    high = np.quantile(boots, 1.0 - alpha, axis=0)
    est = [Estimate(float(point[k]), float(min(low[k], point[k])), float(max(high[k], point[k])))
           for k in range(3)]
    return MovementObjectives(*est)


def hinge_penalties(simulated: Sequence[float], targets: MovementObjectives) -> np.ndarray:
    """Per-statistic ``max(0, |simulated - target| - CI halfwidth)``."""
    sim = np.asarray(simulated, dtype=float)
    out = np.empty(len(STATISTICS))
    for k, name in enumerate(STATISTICS):
        e = getattr(targets, name)
        out[k] = max(0.0, abs(sim[k] - e.value) - e.halfwidth)
    return out


# Decision variables of the inverse calibration: (name, config section, field, default bounds)
CALIBRATION_VARIABLES = (
    ("prob_food_forest", "scenario", "forest_food_percent", (0.01, 0.5)),
    ("max_food_value_forest", "scenario", "forest_max_food_value", (1.0, 25.0)),
    ("percent_memory_elephant", "agent", "percent_memory", (0.05, 0.95)),
    ("radius_food_search", "agent", "radius_food_search", (150.0, 3000.0)),
)


def apply_variables(config, vector: Sequence[float]):
    """Copy of a :class:`~elephant_abm.engine.RunConfig` with decision variables substituted."""
    scenario_kw, agent_kw = {}, {}
    for (name, section, fld, _), v in zip(CALIBRATION_VARIABLES, vector):
        (scenario_kw if section == "scenario" else agent_kw)[fld] = float(v)
    return replace(config, scenario=replace(config.scenario, **scenario_kw),
                   agent=replace(config.agent, **agent_kw))


def simulation_objective(config, targets: MovementObjectives, threads: int = 1,
                         runner: Optional[Callable] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Objective for :func:`nsga2`: hinge penalties of a simulated batch against targets."""
    from ..engine import run_batch

    run = runner or (lambda cfg: run_batch(cfg, threads=threads))

    def evaluate(vector):
        batch = run(apply_variables(config, vector))
        trajs = [np.column_stack([r.x, r.y]) for r in batch.replicates]
        sim = movement_objectives(trajs, n_boot=0)
        return hinge_penalties(sim.values(), targets)

    return evaluate
