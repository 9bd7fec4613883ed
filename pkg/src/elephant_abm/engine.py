"""Tick scheduler, replicate batches and output writers.

One tick is five minutes, 288 per day. Within a tick the order is:
temperature (refreshed on the hour), disturbance, danger, mode switch,
movement, damage, eating and drinking, fitness deprecation; the daily
fitness update runs after the last tick of each day.
"""
from __future__ import annotations

import calendar
import csv
import datetime as _dt
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .agent import (
    AgentParams,
    AgentRandom,
    DirectionalFilter,
    ElephantAgent,
    Mode,
    MovementDistributions,
    create_agent,
    eat_food,
    end_of_day_update,
    inflict_damage,
    is_thermoregulating,
    select_target,
    step_encamped,
    step_exploratory,
    switch_mode,
    thermoregulation_probability,
    update_danger_to_life,
)
from .environment import (
    DEFAULT_MONTHLY_TEMPERATURE,
    DisturbanceSchedule,
    ScenarioConfig,
    SyntheticLandscapeSpec,
    TemperatureModel,
    assign_agri_plots,
    disturbance_at,
    generate_synthetic_landscape,
    init_food,
    temperature_field,
)
from .terrain import TerrainStack, build_stack, load_ascii_grid

__all__ = [
    "TICKS_PER_DAY",
    "TICK_MINUTES",
    "MODES",
    "LandscapeConfig",
    "RunConfig",
    "World",
    "ReplicateResult",
    "BatchResult",
    "ReplicateError",
    "replicate_seed",
    "build_world",
    "run_replicate",
    "run_batch",
    "raid_episodes",
    "write_batch",
]

TICKS_PER_DAY = 288
TICK_MINUTES = 5
TICKS_PER_HOUR = 12
MODES = (Mode.RANDOM_WALK, Mode.FORAGING, Mode.THERMOREGULATION, Mode.ESCAPE)
_MODE_CODE = {m: i for i, m in enumerate(MODES)}
RAID_GAP_TICKS = TICKS_PER_HOUR


@dataclass(frozen=True)
class LandscapeConfig:
    """Where the landscape comes from.

    Either ``synthetic`` is set, or ``elevation`` and ``landuse`` name ESRI
    ASCII grids (``buildings`` optional). ``temperature`` maps month to
    ``(tmin, tmax)`` where each entry is a number or a grid path.
    """

    synthetic: Optional[SyntheticLandscapeSpec] = None
    elevation: Optional[str] = None
    landuse: Optional[str] = None
    buildings: Optional[str] = None
    agri_fractions: Optional[Mapping] = None
    nodata_policy: Union[str, float] = "min"
    seed: int = 0
    start: Optional[tuple] = None
    temperature: Mapping = field(default_factory=lambda: dict(DEFAULT_MONTHLY_TEMPERATURE))

    def __post_init__(self):
        if self.synthetic is None and (self.elevation is None or self.landuse is None):
            raise ValueError("landscape needs either a synthetic spec or elevation and landuse grids")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a batch of replicates."""

    landscape: LandscapeConfig = field(default_factory=lambda: LandscapeConfig(synthetic=SyntheticLandscapeSpec()))
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent: AgentParams = field(default_factory=AgentParams)
    movement: MovementDistributions = field(default_factory=MovementDistributions)
    disturbance: DisturbanceSchedule = field(default_factory=DisturbanceSchedule)
    month: int = 1
    year: int = 2020
    days: Optional[int] = None
    master_seed: int = 0
    replicates: int = 192

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError("month must lie in 1-12")
        if self.days is not None and self.days < 1:
            raise ValueError("days must be at least 1")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")

    @property
    def n_days(self) -> int:
        return self.days if self.days is not None else calendar.monthrange(self.year, self.month)[1]

    @property
    def start_time(self) -> _dt.datetime:
        return _dt.datetime(self.year, self.month, 1)


class ReplicateError(RuntimeError):
    """A replicate failed; ``index`` identifies which."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replicate {index} failed: {cause!r}")
        self.index = index
        self.cause = cause


@dataclass
class World:
    """Read-only state shared by all replicates of a batch."""

    stack: TerrainStack
    directions: DirectionalFilter
    temperature: TemperatureModel
    start: tuple


def replicate_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed sequence for one replicate, a stable function of both integers."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def _seed_id(seq: np.random.SeedSequence) -> int:
    lo, hi = seq.generate_state(2, dtype=np.uint32).tolist()
    return (hi << 32) | lo


def _temperature_model(spec: Mapping, header) -> TemperatureModel:
    monthly = {}
    for month, pair in spec.items():
        tmin, tmax = pair
        vals = []
        for v in (tmin, tmax):
            if isinstance(v, (str, os.PathLike)):
                grid = load_ascii_grid(v)
                if not grid.header.aligned_with(header):
                    raise ValueError(f"temperature grid {v} is not aligned with the landscape")
                vals.append(grid.data)
            else:
                vals.append(float(v))
        monthly[int(month)] = tuple(vals)
    return TemperatureModel(monthly)


def build_world(config: RunConfig) -> World:
    """Load or generate the landscape and precompute the terrain filter."""
    land = config.landscape
    if land.synthetic is not None:
        stack, _ = generate_synthetic_landscape(land.synthetic, land.seed)
        default_start = land.synthetic.default_start()
    else:
        elev = load_ascii_grid(land.elevation, land.nodata_policy)
        lu = load_ascii_grid(land.landuse, "keep")
        bld = load_ascii_grid(land.buildings, 0.0) if land.buildings else None
        stack = build_stack(elev, lu, bld)
        gardens = assign_agri_plots(stack.landuse, land.agri_fractions, np.random.default_rng(land.seed))
        stack = stack.with_agri_plots(gardens)
        default_start = None
    start = tuple(land.start) if land.start is not None else default_start
    if start is None:
        raise ValueError("landscape.start is required for file-based landscapes")
    if not stack.header.contains(*start):
        raise ValueError(f"start position {start} lies outside the landscape")
    directions = DirectionalFilter(stack, config.agent.terrain_radius, config.agent.slope_limit)
    return World(stack, directions, _temperature_model(land.temperature, stack.header), start)


@dataclass
class ReplicateResult:
    """Per-tick trajectory, per-day records and events of one replicate.

    Tick arrays hold the state after each tick's movement. Events are
    ``(tick, kind, x, y)`` tuples in time order.
    """

    index: int
    seed: int
    start_time: _dt.datetime
    x: np.ndarray
    y: np.ndarray
    row: np.ndarray
    col: np.ndarray
    mode: np.ndarray
    fitness: np.ndarray
    thermo_scheduled: np.ndarray
    days: list
    events: list
    initial_food: float
    final_food: float
    consumed: float
    died: bool
    death_tick: Optional[int]
    episodes: list = field(default_factory=list)

    @property
    def n_ticks(self) -> int:
        return int(self.x.size)

    def timestamp(self, tick: int) -> str:
        return (self.start_time + _dt.timedelta(minutes=TICK_MINUTES * int(tick))).isoformat()

    @property
    def death_day(self) -> Optional[int]:
        """Whole days elapsed when the agent died (ticks survived // 288)."""
        return None if self.death_tick is None else (self.death_tick + 1) // TICKS_PER_DAY


def raid_episodes(on_plantation: np.ndarray, gap: int = RAID_GAP_TICKS) -> list[tuple[int, int]]:
    """Maximal runs of plantation ticks not separated by ``gap`` or more ticks outside.

    Returns inclusive ``(first_tick, last_tick)`` pairs.
    """
    ticks = np.flatnonzero(on_plantation)
    if ticks.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(ticks) - 1 >= gap)
    starts = np.concatenate([[ticks[0]], ticks[breaks + 1]])
    ends = np.concatenate([ticks[breaks], [ticks[-1]]])
    return [(int(a), int(b)) for a, b in zip(starts, ends)]


_KIND_OF = {Mode.FORAGING: "food", Mode.THERMOREGULATION: "thermoregulate", Mode.ESCAPE: "escape"}


def _set_target(agent: ElephantAgent, world: World, cell) -> None:
    agent.target = cell
    x, y = world.stack.header.cell_center(cell[0], cell[1])
    agent.target_xy = (float(x), float(y))


def _act(agent: ElephantAgent, world: World, food, rng, temperature, disturbance) -> None:
    stack = world.stack
    mode = agent.mode
    if mode is Mode.RANDOM_WALK:
        step_encamped(agent, rng, stack, disturbance)
        return
    if agent.target is None:
        cell = select_target(agent, _KIND_OF[mode], world.directions, food, rng,
                             temperature=temperature, disturbance=disturbance)
        if cell is None:
            step_encamped(agent, rng, stack, disturbance)
            return
        _set_target(agent, world, cell)
    if (mode is Mode.FORAGING and disturbance > agent.disturbance_tolerance
            and stack.plantation[agent.target]):
        # a crop target in daylight sends the agent back toward forest
        agent.mode = Mode.ESCAPE
        cell = select_target(agent, "escape", world.directions, food, rng, disturbance=disturbance)
        if cell is None:
            agent.target = agent.target_xy = None
            step_encamped(agent, rng, stack, disturbance)
            return
        _set_target(agent, world, cell)
    step_exploratory(agent, agent.target_xy, rng, stack, disturbance)


def run_replicate(config: RunConfig, index: int, world: Optional[World] = None) -> ReplicateResult:
    """Simulate one replicate.

    The outcome depends only on ``config`` and ``index``.
    """
    world = build_world(config) if world is None else world
    stack = world.stack
    seq = replicate_seed(config.master_seed, index)
    gen = np.random.default_rng(seq)
    food = init_food(stack, config.scenario, gen)
    initial_food = float(food.sum())
    agent = create_agent(stack, food, world.start, config.agent, config.movement, gen,
                         agent_id=f"elephant-{index}")
    rng = AgentRandom(gen)

    p = config.agent
    n_ticks = TICKS_PER_DAY * config.n_days
    xs = np.empty(n_ticks)
    ys = np.empty(n_ticks)
    rows = np.empty(n_ticks, dtype=np.int32)
    cols = np.empty(n_ticks, dtype=np.int32)
    modes = np.empty(n_ticks, dtype=np.int8)
    fits = np.empty(n_ticks)
    sched = np.zeros(n_ticks, dtype=bool)
    events: list = []
    days: list = []

    levels = [disturbance_at(config.disturbance, (m * TICK_MINUTES) / 60.0) for m in range(TICKS_PER_DAY)]
    water = stack.water
    thr, state, dep = p.thermoregulation_threshold, p.thermoregulation_state, p.fitness_deprecation
    model, month = world.temperature, config.month
    temp = 0.0
    uniform_temp = True
    was_on_water = bool(water[agent.row, agent.col])
    death_tick = None
    consumed = 0.0
    n_done = 0

    for t in range(n_ticks):
        tod = t % TICKS_PER_DAY
        if tod % TICKS_PER_HOUR == 0:
            temp = temperature_field(model, month, tod // TICKS_PER_HOUR)
            uniform_temp = np.ndim(temp) == 0
        disturbance = levels[tod]
        update_danger_to_life(agent, stack, disturbance)
        t_here = temp if uniform_temp else float(temp[agent.row, agent.col])
        hot = thermoregulation_probability(t_here, thr, state) > 0.5
        if hot:
            agent.thermoregulation_steps_today += 1
        switch_mode(agent, t_here, rng)
        _act(agent, world, food, rng, temp, disturbance)

        for ev in inflict_damage(agent, stack, rng, t):
            events.append(ev)
        consumed += eat_food(agent, food, rng, stack)
        on_water = bool(water[agent.row, agent.col])
        if on_water:
            agent.visited_water_today = True
            if not was_on_water:
                events.append((t, "water_visit", agent.x, agent.y))
        was_on_water = on_water
        if hot and is_thermoregulating(agent, stack):
            agent.thermoregulated_steps_today += 1
        agent.fitness = max(0.0, agent.fitness - dep)

        xs[t], ys[t] = agent.x, agent.y
        rows[t], cols[t] = agent.row, agent.col
        modes[t] = _MODE_CODE[agent.mode]
        fits[t] = agent.fitness
        sched[t] = hot
        n_done = t + 1

        if agent.fitness <= 0.0:
            agent.alive = False
        elif tod == TICKS_PER_DAY - 1:
            rec = end_of_day_update(agent)
            rec["day"] = t // TICKS_PER_DAY
            days.append(rec)
            fits[t] = agent.fitness
        if not agent.alive:
            death_tick = t
            events.append((t, "death", agent.x, agent.y))
            break

    sl = slice(0, n_done)
    on_plant = stack.plantation[rows[sl], cols[sl]]
    episodes = raid_episodes(on_plant)
    for a, b in episodes:
        events.append((a, "raid_start", float(xs[a]), float(ys[a])))
        events.append((b, "raid_end", float(xs[b]), float(ys[b])))
    events.sort(key=lambda e: e[0])
    return ReplicateResult(
        index=index, seed=_seed_id(seq), start_time=config.start_time,
        x=xs[sl].copy(), y=ys[sl].copy(), row=rows[sl].copy(), col=cols[sl].copy(),
        mode=modes[sl].copy(), fitness=fits[sl].copy(), thermo_scheduled=sched[sl].copy(),
        days=days, events=events, initial_food=initial_food, final_food=float(food.sum()),
        consumed=consumed, died=death_tick is not None, death_tick=death_tick, episodes=episodes,
    )


@dataclass
class BatchResult:
    config: RunConfig
    replicates: list
    summary: dict


_WORKER: dict = {}


def _worker_init(config: RunConfig) -> None:
    _WORKER["config"] = config
    _WORKER["world"] = build_world(config)


def _worker_run(index: int) -> ReplicateResult:
    try:
        return run_replicate(_WORKER["config"], index, _WORKER["world"])
    except Exception as exc:  # pragma: no cover - exercised via the serial path
        raise ReplicateError(index, exc) from exc


def run_batch(config: RunConfig, threads: int = 1, world: Optional[World] = None,
              indices: Optional[Sequence[int]] = None) -> BatchResult:
    """Run every replicate and aggregate a summary.

    With ``threads > 1`` replicates are spread over worker processes. The
    result does not depend on ``threads``.
    """
    indices = list(range(config.replicates)) if indices is None else list(indices)
    if threads <= 1 or len(indices) <= 1:
        world = build_world(config) if world is None else world
        results = []
        for i in indices:
            try:
                results.append(run_replicate(config, i, world))
            except Exception as exc:
                raise ReplicateError(i, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_worker_init,
                                 initargs=(config,)) as pool:
            results = list(pool.map(_worker_run, indices))
    stack = world.stack if world is not None else None
    return BatchResult(config, results, summarize(results, config, stack))


def _steep_fraction(res: ReplicateResult, stack: Optional[TerrainStack], limit: float) -> Optional[float]:
    if stack is None or res.n_ticks == 0:
        return None
    return float(np.mean(stack.slope[res.row, res.col] > limit))


def summarize(results: Sequence[ReplicateResult], config: RunConfig,
              stack: Optional[TerrainStack] = None) -> dict:
    """Batch summary: per-replicate aggregates plus raid statistics."""
    from .analytics import raid_stats

    if stack is None:
        stack = build_world(config).stack
    per = []
    for r in results:
        kinds = [e[1] for e in r.events]
        on_plant = stack.plantation[r.row, r.col]
        escape = r.mode == _MODE_CODE[Mode.ESCAPE]
        per.append({
            "index": r.index,
            "seed": r.seed,
            "ticks": r.n_ticks,
            "died": r.died,
            "death_day": r.death_day,
            "final_fitness": float(r.fitness[-1]) if r.n_ticks else None,
            "raid_episodes": len(r.episodes),
            "plantation_ticks": int(on_plant.sum()),
            "plantation_ticks_not_escaping": int((on_plant & ~escape).sum()),
            "crop_damage_events": kinds.count("crop_damage"),
            "infrastructure_damage_events": kinds.count("infrastructure_damage"),
            "water_visits": kinds.count("water_visit"),
            "food_consumed_kg": r.consumed,
            "thermoregulation_tick_fraction": float(r.thermo_scheduled.mean()) if r.n_ticks else 0.0,
            "steep_tick_fraction": _steep_fraction(r, stack, config.agent.slope_limit),
            "daily_intake_kg": [d["intake_kg"] for d in r.days],
        })
    stats = raid_stats(results, stack, month=config.month,
                       ddmi=config.agent.daily_dry_matter_intake)
    from . import BUILD_ID
    return {
        "build": BUILD_ID,
        "month": config.month,
        "year": config.year,
        "days": config.n_days,
        "master_seed": config.master_seed,
        "replicates": len(results),
        "raid_probability": stats.raid_probability,
        "reentry_probability": stats.reentry_probability,
        "mean_raid_episodes": stats.mean_episodes,
        "deprived_raid_fraction": stats.deprived_raid_fraction,
        "starvation_probability": stats.starvation_probability,
        "death_fraction": float(np.mean([r.died for r in results])) if results else 0.0,
        "daily_intake_histogram": stats.intake_histogram,
        "per_replicate": per,
    }


def _fmt(v: float) -> str:
    return repr(float(v))


def write_batch(batch: BatchResult, out_dir: Union[str, Path], resolved_config: Optional[dict] = None) -> Path:
    """Write trajectories, events, daily records and the summary under ``out_dir``."""
    out = Path(out_dir)
    for sub in ("trajectories", "events", "days"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for r in batch.replicates:
        name = f"replicate_{r.index:04d}.csv"
        with open(out / "trajectories" / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "timestamp", "x", "y", "mode", "fitness"])
            for t in range(r.n_ticks):
                w.writerow([t, r.timestamp(t), _fmt(r.x[t]), _fmt(r.y[t]),
                            MODES[r.mode[t]].value, _fmt(r.fitness[t])])
        with open(out / "events" / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "kind", "x", "y"])
            for tick, kind, x, y in r.events:
                w.writerow([r.timestamp(tick), kind, _fmt(x), _fmt(y)])
        with open(out / "days" / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = ["day", "date", "intake_kg", "forest_intake_kg", "crop_intake_kg",
                    "food_deprivation_days", "water_visit_days", "thermoregulation_ticks",
                    "thermoregulated_ticks", "fitness"]
            w.writerow(cols)
            for d in r.days:
                date = (r.start_time + _dt.timedelta(days=d["day"])).date().isoformat()
                w.writerow([d["day"], date, _fmt(d["intake_kg"]), _fmt(d["forest_intake_kg"]),
                            _fmt(d["crop_intake_kg"]), d["food_deprivation_days"],
                            d["water_visit_days"], d["thermoregulation_ticks"],
                            d["thermoregulated_ticks"], _fmt(d["fitness"])])
    (out / "summary.json").write_text(json.dumps(batch.summary, indent=2, sort_keys=True) + "\n")
    if resolved_config is not None:
        (out / "resolved-config.json").write_text(json.dumps(resolved_config, indent=2, sort_keys=True) + "\n")
    return out
