"""Slope-tolerance sweep: steep-terrain occupancy of batches as a function of tolerance."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = ["SlopeTuning", "NoFeasibleTolerance", "steep_tick_fraction", "tune_slope_tolerance"]


class NoFeasibleTolerance(RuntimeError):
    """No candidate tolerance keeps the steep-tick fraction within the bound."""

    def __init__(self, fractions: dict, bound: float):
        super().__init__(f"no tolerance keeps steep ticks <= {bound:g}: {fractions}")
        self.fractions = fractions
        self.bound = bound


@dataclass(frozen=True)
class SlopeTuning:
    tolerance: float
    fractions: dict
    bound: float

    def rows(self) -> list[dict]:
        return [{"tolerance": t, "steep_tick_fraction": f, "within_bound": f <= self.bound}
                for t, f in self.fractions.items()]


def steep_tick_fraction(results, stack, slope_limit: float) -> float:
    """Share of all simulated ticks spent on cells steeper than ``slope_limit`` degrees."""
    steep = total = 0
    for r in results:
        steep += int(np.count_nonzero(stack.slope[r.row, r.col] > slope_limit))
        total += r.row.size
    return steep / total if total else 0.0


def tune_slope_tolerance(config, tolerances: Sequence[float], bound: float = 0.01, threads: int = 1,
                         choose: str = "smallest", world=None) -> SlopeTuning:
    """Run one batch per candidate tolerance and select a feasible one.

    ``choose`` picks the ``"smallest"`` or ``"largest"`` tolerance whose
    batch keeps the steep-tick fraction at or below ``bound``. All batches
    share the master seed, so differences come from the tolerance alone.
    """
    from ..engine import build_world, run_batch

    if choose not in ("smallest", "largest"):
        raise ValueError("choose must be 'smallest' or 'largest'")
    cands = sorted(float(t) for t in tolerances)
    if not cands:
        raise ValueError("no candidate tolerances")
    base_world = build_world(config) if world is None else world
    fractions = {}
    for tol in cands:
        cfg = replace(config, agent=replace(config.agent, tolerance=tol))
        # sector costs depend on terrain radius and slope limit, not tolerance
        batch = run_batch(cfg, threads=threads, world=base_world if threads <= 1 else None)
        fractions[tol] = steep_tick_fraction(batch.replicates, base_world.stack, cfg.agent.slope_limit)
    ok = [t for t in cands if fractions[t] <= bound]
    if not ok:
        raise NoFeasibleTolerance(fractions, bound)
    return SlopeTuning(ok[0] if choose == "smallest" else ok[-1], fractions, bound)

