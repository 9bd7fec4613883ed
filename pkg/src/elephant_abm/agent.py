"""The bull elephant: state, movement, decisions, feeding and fitness.

Headings are compass bearings in radians (0 = north, clockwise), so a step
of length ``L`` along heading ``h`` moves ``(L sin h, L cos h)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .terrain import TerrainStack

__all__ = [
    "Mode",
    "AgentParams",
    "MovementDistributions",
    "MemoryMatrix",
    "ElephantAgent",
    "AgentRandom",
    "DirectionalFilter",
    "DIRECTION_NAMES",
    "von_bertalanffy_weight",
    "init_memory",
    "create_agent",
    "update_danger_to_life",
    "thermoregulation_probability",
    "switch_mode",
    "feasible_directions",
    "step_exploratory",
    "step_encamped",
    "select_target",
    "eat_food",
    "inflict_damage",
    "is_thermoregulating",
    "end_of_day_update",
    "advance_year",
]

TICKS_PER_DAY = 288
DIRECTION_NAMES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")


class Mode(str, enum.Enum):
    RANDOM_WALK = "random-walk"
    FORAGING = "foraging"
    THERMOREGULATION = "thermoregulation"
    ESCAPE = "escape"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class AgentParams:
    """Static parameters of the elephant agent.

    Distances are metres, fitness rates per 5-minute tick, temperatures
    deg C. ``precedence`` selects whether the starvation check comes before
    (``"prose"``) or after (``"algorithm"``) the temperature check.
    """

    radius_food_search: float = 750.0
    radius_water_search: float = 750.0
    radius_forest_search: float = 1500.0
    knowledge_from_fringe: float = 1500.0
    percent_memory: float = 0.375
    fitness_threshold: float = 0.4
    fitness_deprecation: float = 0.000347
    thermoregulation_threshold: float = 32.0
    thermoregulation_state: float = -0.1
    terrain_radius: float = 750.0
    slope_limit: float = 30.0
    tolerance: float = 100.0
    threshold_num_days: int = 3
    disturbance_tolerance: float = 0.5
    prob_crop_damage: float = 0.1
    prob_infrastructure_damage: float = 0.05
    aggression: float = 0.5
    food_habituation: bool = True
    habituation_ratio: float = 0.5
    age: float = 40.0
    body_weight: float = 4000.0
    daily_dry_matter_intake: float = 68.0
    precedence: str = "prose"

    def __post_init__(self):
        if self.precedence not in ("prose", "algorithm"):
            raise ValueError("precedence must be 'prose' or 'algorithm'")
        for name in ("aggression", "percent_memory", "prob_crop_damage",
                     "prob_infrastructure_damage", "fitness_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("radius_food_search", "radius_water_search", "radius_forest_search",
                     "terrain_radius", "daily_dry_matter_intake"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _gamma_shape_scale(mean: float, sd: float) -> tuple[float, float]:
    return (mean / sd) ** 2, sd * sd / mean


@dataclass(frozen=True)
class MovementDistributions:
    """Two-state movement model: state 1 encamped, state 2 exploratory.

    Step lengths are in km. ``explore_noise`` is the half-width (radians)
    of the uniform heading noise used for target-directed steps.
    """

    p11: float = 0.8775
    p22: float = 0.9096
    encamped_step_mean: float = 0.0040
    encamped_step_sd: float = 0.0034
    exploratory_step_mean: float = 0.0398
    exploratory_step_sd: float = 0.0378
    encamped_turn_mean: float = -3.0232
    encamped_turn_kappa: float = 0.3336
    explore_noise: float = math.radians(15.0)

    def __post_init__(self):
        for p in (self.p11, self.p22):
            if not 0.0 <= p <= 1.0:
                raise ValueError("transition probabilities must lie in [0, 1]")
        for v in (self.encamped_step_mean, self.encamped_step_sd,
                  self.exploratory_step_mean, self.exploratory_step_sd):
            if not v > 0:
                raise ValueError("step-length parameters must be positive")

    @property
    def p12(self) -> float:
        return 1.0 - self.p11

    @property
    def p21(self) -> float:
        return 1.0 - self.p22

    @property
    def transition_matrix(self) -> np.ndarray:
        return np.array([[self.p11, self.p12], [self.p21, self.p22]])

    @property
    def encamped_gamma(self) -> tuple[float, float]:
        """(shape, scale) of encamped step length in km."""
        return _gamma_shape_scale(self.encamped_step_mean, self.encamped_step_sd)

    @property
    def exploratory_gamma(self) -> tuple[float, float]:
        return _gamma_shape_scale(self.exploratory_step_mean, self.exploratory_step_sd)


class AgentRandom:
    """Buffered scalar draws from a numpy ``Generator``.

    Draws are pulled in blocks per distribution, which keeps per-tick cost
    low while remaining a pure function of the generator's seed.
    """

    def __init__(self, rng: Union[np.random.Generator, int, None], block: int = 1024):
        self.generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._block = block
        self._buffers: dict = {}

    def _next(self, key, fill):
        buf = self._buffers.get(key)
        if buf is None or not buf:
            buf = fill(self._block).tolist()
            buf.reverse()
            self._buffers[key] = buf
        return buf.pop()

    def uniform(self) -> float:
        """Uniform on [0, 1)."""
        return self._next("u", self.generator.random)

    def index(self, n: int) -> int:
        """Uniform integer on [0, n)."""
        return min(int(self.uniform() * n), n - 1)

    def gamma(self, shape: float, scale: float) -> float:
        return self._next(("g", shape), lambda k: self.generator.standard_gamma(shape, k)) * scale

    def vonmises(self, mu: float, kappa: float) -> float:
        return self._next(("vm", mu, kappa), lambda k: self.generator.vonmises(mu, kappa, k))


def _as_random(rng) -> AgentRandom:
    return rng if isinstance(rng, AgentRandom) else AgentRandom(rng)


@dataclass
class MemoryMatrix:
    """The agent's food knowledge: a set of known cells and their food values.

    Water knowledge is complete and read from the terrain stack.
    """

    known: np.ndarray
    food: np.ndarray

    def value(self, row: int, col: int) -> float:
        return float(self.food[row, col]) if self.known[row, col] else 0.0


@dataclass
class ElephantAgent:
    """Mutable state of one elephant during a replicate."""

    params: AgentParams
    movement: MovementDistributions
    memory: MemoryMatrix
    x: float
    y: float
    heading: float = 0.0
    mode: Mode = Mode.RANDOM_WALK
    fitness: float = 1.0
    id: str = "elephant-0"
    age: float = 40.0
    body_weight: float = 4000.0
    daily_dry_matter_intake: float = 68.0
    aggression: float = 0.5
    food_habituation: bool = True
    disturbance_tolerance: float = 0.5
    danger_to_life: bool = False
    num_days_food_deprivation: int = 0
    num_days_water_source_visit: int = 0
    todays_intake: float = 0.0
    todays_forest_intake: float = 0.0
    todays_crop_intake: float = 0.0
    thermoregulation_steps_today: int = 0
    thermoregulated_steps_today: int = 0
    visited_water_today: bool = False
    alive: bool = True
    target: Optional[tuple] = None
    target_xy: Optional[tuple] = None
    row: int = 0
    col: int = 0


def von_bertalanffy_weight(age: float, asymptote: float = 4000.0, k: float = 0.149,
                           t0: float = -3.16, exponent: float = 3.0) -> float:
    """Body weight (kg) of a bull at ``age`` years."""
    return asymptote * (1.0 - math.exp(-k * (age - t0))) ** exponent


def init_memory(stack: TerrainStack, food: np.ndarray, params: AgentParams,
                rng: np.random.Generator) -> MemoryMatrix:
    """Initial food memory.

    A random ``percent_memory`` share of the food-bearing forest cells, plus
    every home-garden cell within ``knowledge_from_fringe`` of the forest.
    """
    forest_food = stack.forest & (food > 0)
    idx = np.flatnonzero(forest_food)
    n_known = int(round(params.percent_memory * idx.size))
    chosen = rng.choice(idx, size=n_known, replace=False) if n_known else idx[:0]
    known = np.zeros(stack.shape, dtype=bool)
    known.flat[chosen] = True
    gardens = stack.agri_plots if stack.agri_plots is not None else np.zeros(stack.shape, bool)
    known |= gardens & (stack.proximity_forest <= params.knowledge_from_fringe)
    mem = np.where(known, food, 0.0)
    return MemoryMatrix(known=known, food=mem)


def _locate(agent: ElephantAgent, stack: TerrainStack) -> None:
    h = stack.header
    agent.col = int(math.floor((agent.x - h.xll) / h.cellsize))
    agent.row = int(math.floor((h.ytop - agent.y) / h.cellsize))


def create_agent(stack: TerrainStack, food: np.ndarray, position: tuple,
                 params: AgentParams = AgentParams(),
                 movement: MovementDistributions = MovementDistributions(),
                 rng: Optional[np.random.Generator] = None, agent_id: str = "elephant-0") -> ElephantAgent:
    """Initialise an agent: full fitness, zero counters, random mode and heading.

    Raises
    ------
    ValueError
        If ``position`` lies outside the landscape.
    """
    rng = np.random.default_rng() if rng is None else rng
    x, y = float(position[0]), float(position[1])
    if not stack.header.contains(x, y):
        raise ValueError(f"initial position ({x}, {y}) lies outside the landscape")
    memory = init_memory(stack, food, params, rng)
    mode = Mode.RANDOM_WALK if rng.random() < 0.5 else Mode.FORAGING
    agent = ElephantAgent(
        params=params, movement=movement, memory=memory, x=x, y=y,
        heading=float(rng.uniform(0.0, 2.0 * math.pi)), mode=mode, id=agent_id,
        age=params.age, body_weight=params.body_weight,
        daily_dry_matter_intake=params.daily_dry_matter_intake,
        aggression=params.aggression, food_habituation=params.food_habituation,
        disturbance_tolerance=params.disturbance_tolerance,
    )
    _locate(agent, stack)
    return agent


# ---------------------------------------------------------------- directions


def _sector_of(dr: np.ndarray, dc: np.ndarray) -> np.ndarray:
    bearing = np.degrees(np.arctan2(dc, -dr)) % 360.0
    return (np.floor((bearing + 22.5) / 45.0).astype(np.intp)) % 8


class _Window:
    """Disk of cells around the origin, split into 8 compass sectors."""

    def __init__(self, radius_cells: float):
        r = int(math.floor(radius_cells))
        self.r = r
        dr, dc = np.mgrid[-r:r + 1, -r:r + 1]
        self.disk = (dr * dr + dc * dc <= radius_cells * radius_cells) & ~((dr == 0) & (dc == 0))
        self.sector = np.where(self.disk, _sector_of(dr, dc), -1)

    def offsets(self):
        dr, dc = np.nonzero(self.disk)
        dr, dc = dr - self.r, dc - self.r
        return (dr.astype(np.intp), dc.astype(np.intp),
                self.sector[dr + self.r, dc + self.r].astype(np.intp))


class DirectionalFilter:
    """Per-cell, per-direction slope cost for the terrain filter.

    ``costs[d, r, c]`` is the summed slope of cells steeper than
    ``slope_limit`` inside sector ``d`` (0 = N, clockwise) of the disk of
    radius ``terrain_radius`` around cell ``(r, c)``. Search windows for
    other radii are cached on demand.
    """

    def __init__(self, stack: TerrainStack, terrain_radius: float = 750.0, slope_limit: float = 30.0):
        self.stack = stack
        self.cellsize = stack.header.cellsize
        self.terrain_radius = terrain_radius
        self.slope_limit = slope_limit
        window = _Window(terrain_radius / self.cellsize)
        dr, dc, sec = window.offsets()
        excess = np.where(stack.slope > slope_limit, stack.slope, 0.0)
        if excess.any():
            self.costs = kernels.sector_costs(np.ascontiguousarray(excess), dr, dc, sec, 8)
        else:
            self.costs = np.zeros((8,) + stack.shape)
        self._windows: dict = {}

    def window(self, radius: float) -> _Window:
        key = round(radius / self.cellsize, 9)
        w = self._windows.get(key)
        if w is None:
            w = self._windows[key] = _Window(radius / self.cellsize)
        return w

    def direction_costs(self, row: int, col: int) -> np.ndarray:
        return self.costs[:, row, col]


def feasible_directions(agent: ElephantAgent, directions: DirectionalFilter) -> list[int]:
    """Indices (0 = N, clockwise) of directions whose slope cost is below tolerance.

    When none qualifies the single cheapest direction is returned.
    """
    costs = directions.costs[:, agent.row, agent.col].tolist()
    tol = agent.params.tolerance
    ok = [d for d in range(8) if costs[d] < tol]
    if ok:
        return ok
    return [min(range(8), key=costs.__getitem__)]


# ------------------------------------------------------------------ decisions


def update_danger_to_life(agent: ElephantAgent, stack: TerrainStack, disturbance: float) -> bool:
    """Danger when the agent stands in a plantation and disturbance exceeds its tolerance."""
    agent.danger_to_life = bool(stack.plantation[agent.row, agent.col]) and disturbance > agent.disturbance_tolerance
    return agent.danger_to_life


def thermoregulation_probability(t_current: float, t_threshold: float, state: float = -0.1) -> float:
    """Logistic probability of thermoregulating, exactly 0.5 at the threshold."""
    z = state * (t_current - t_threshold)
    if z <= 0:
        return 1.0 / (1.0 + math.exp(z))
    e = math.exp(-z)
    return e / (1.0 + e)


def switch_mode(agent: ElephantAgent, ambient_t: float, rng) -> Mode:
    """Choose the behavioural mode for this tick and store it on the agent.

    Overrides in order: danger, then starvation and heat (order set by
    ``params.precedence``), then a two-state Markov draw between random
    walk and foraging. A mode change clears the current target.
    """
    rng = _as_random(rng)
    p = agent.params
    previous = agent.mode
    hot = thermoregulation_probability(ambient_t, p.thermoregulation_threshold, p.thermoregulation_state) > 0.5
    hungry = agent.fitness < p.fitness_threshold
    if agent.danger_to_life:
        mode = Mode.ESCAPE
    elif p.precedence == "prose" and hungry:
        mode = Mode.FORAGING
    elif hot:
        mode = Mode.THERMOREGULATION
    elif hungry:
        mode = Mode.FORAGING
    else:
        u = rng.uniform()
        mv = agent.movement
        if previous is Mode.RANDOM_WALK:
            mode = Mode.RANDOM_WALK if u < mv.p11 else Mode.FORAGING
        elif previous is Mode.FORAGING:
            mode = Mode.FORAGING if u < mv.p22 else Mode.RANDOM_WALK
        else:
            mode = Mode.RANDOM_WALK if u < 0.5 else Mode.FORAGING
    if mode is not previous:
        agent.target = None
        agent.target_xy = None
    agent.mode = mode
    return mode


# ------------------------------------------------------------------- movement


def _try_move(agent: ElephantAgent, nx: float, ny: float, stack: Optional[TerrainStack],
              disturbance: float) -> bool:
    """Commit a proposed position unless it leaves the grid or walks into danger."""
    if stack is not None:
        h = stack.header
        col = int(math.floor((nx - h.xll) / h.cellsize))
        row = int(math.floor((h.ytop - ny) / h.cellsize))
        if not (0 <= row < h.nrows and 0 <= col < h.ncols):
            return False
        if (disturbance > agent.disturbance_tolerance and stack.plantation[row, col]
                and not stack.plantation[agent.row, agent.col]):
            return False
        agent.row, agent.col = row, col
    agent.x, agent.y = nx, ny
    return True


def step_exploratory(agent: ElephantAgent, target: tuple, rng,
                     stack: Optional[TerrainStack] = None, disturbance: float = 0.0) -> tuple:
    """Take one target-directed step.

    The heading points at ``target`` (map coordinates) plus uniform noise;
    the length is drawn from the exploratory gamma (km). With ``stack``
    given, steps off the grid or from safety into a dangerous plantation
    are refused. Reaching within half a cell of the target switches the
    agent to random walk.

    Returns
    -------
    (x, y) : tuple of float
        Position after the step.
    """
    rng = _as_random(rng)
    mv = agent.movement
    shape, scale = mv.exploratory_gamma
    length = rng.gamma(shape, scale) * 1000.0
    tx, ty = target
    noise = (2.0 * rng.uniform() - 1.0) * mv.explore_noise
    heading = math.atan2(tx - agent.x, ty - agent.y) + noise
    agent.heading = heading
    _try_move(agent, agent.x + length * math.sin(heading), agent.y + length * math.cos(heading),
              stack, disturbance)
    half = 0.5 * (stack.header.cellsize if stack is not None else 30.0)
    if math.hypot(tx - agent.x, ty - agent.y) < half:
        agent.mode = Mode.RANDOM_WALK
        agent.target = None
        agent.target_xy = None
    return agent.x, agent.y


def step_encamped(agent: ElephantAgent, rng, stack: Optional[TerrainStack] = None,
                  disturbance: float = 0.0) -> tuple:
    """Take one correlated-random-walk step (encamped gamma length, von Mises turn)."""
    rng = _as_random(rng)
    mv = agent.movement
    shape, scale = mv.encamped_gamma
    length = rng.gamma(shape, scale) * 1000.0
    turn = rng.vonmises(mv.encamped_turn_mean, mv.encamped_turn_kappa)
    heading = agent.heading + turn
    agent.heading = math.remainder(heading, 2.0 * math.pi)
    _try_move(agent, agent.x + length * math.sin(heading), agent.y + length * math.cos(heading),
              stack, disturbance)
    return agent.x, agent.y


# ------------------------------------------------------------------- targets


def _window_slices(row: int, col: int, r: int, shape):
    r0, r1 = max(0, row - r), min(shape[0], row + r + 1)
    c0, c1 = max(0, col - r), min(shape[1], col + r + 1)
    return (slice(r0, r1), slice(c0, c1),
            slice(r0 - (row - r), r1 - (row - r)), slice(c0 - (col - r), c1 - (col - r)))


def _candidates(agent, directions, radius, layer, dirs):
    """Window cells in the allowed sectors where ``layer`` holds.

    ``layer`` is either a boolean grid or a callable taking the two window
    slices and returning the boolean window. Returns ``(rows, cols)`` in
    grid indices.
    """
    w = directions.window(radius)
    gr, gc, wr, wc = _window_slices(agent.row, agent.col, w.r, directions.stack.shape)
    sector = w.sector[wr, wc]
    allowed = np.isin(sector, dirs) if len(dirs) < 8 else sector >= 0
    cells = layer(gr, gc) if callable(layer) else layer[gr, gc]
    rr, cc = np.nonzero(allowed & cells)
    return rr + gr.start, cc + gc.start


def _disk_sum(agent, directions, radius, values, mask):
    """Sum of ``values`` over ``mask`` cells in the disk around the agent."""
    w = directions.window(radius)
    gr, gc, wr, wc = _window_slices(agent.row, agent.col, w.r, directions.stack.shape)
    sel = w.disk[wr, wc] & mask[gr, gc]
    return float(values[gr, gc][sel].sum())


def select_target(agent: ElephantAgent, kind: str, directions: DirectionalFilter,
                  food: Optional[np.ndarray], rng, temperature=None,
                  disturbance: float = 0.0) -> Optional[tuple]:
    """Pick a target cell ``(row, col)`` for foraging, thermoregulation or escape.

    Candidates are limited to the sectors returned by
    :func:`feasible_directions`. Returns ``None`` when nothing qualifies.

    Parameters
    ----------
    kind : {"food", "thermoregulate", "escape"}
    directions : DirectionalFilter
        Terrain filter and search-window cache for the agent's landscape.
    food : ndarray
        True food grid (only the agent's memory is consulted for targets).
    temperature : float or ndarray, optional
        Current temperature (scalar or grid) for the cool-cell search.
    disturbance : float
        Current disturbance level; plantation cells are excluded from
        thermoregulation targets while it exceeds the agent's tolerance.
    """
    rng = _as_random(rng)
    stack = directions.stack
    p = agent.params
    dirs = feasible_directions(agent, directions)

    if kind == "food":
        mem = agent.memory
        rows, cols = _candidates(agent, directions, p.radius_food_search,
                                 lambda gr, gc: mem.food[gr, gc] > 0, dirs)
        if rows.size == 0:
            return None
        deprived = agent.num_days_food_deprivation > p.threshold_num_days
        habituated = False
        if agent.food_habituation and not deprived:
            crop = _disk_sum(agent, directions, p.radius_food_search, mem.food, stack.plantation)
            forest = _disk_sum(agent, directions, p.radius_food_search, mem.food, stack.forest)
            habituated = crop > p.habituation_ratio * forest and crop > 0
        if (deprived or habituated) and rng.uniform() < agent.aggression:
            prox = stack.proximity_plantation[rows, cols]
            best = np.flatnonzero(prox == prox.min())
            i = best[rng.index(best.size)]
        else:
            i = rng.index(rows.size)
        return int(rows[i]), int(cols[i])

    if kind == "thermoregulate":
        daytime = disturbance > agent.disturbance_tolerance
        thr = p.thermoregulation_threshold
        pools = []
        if temperature is not None and (np.ndim(temperature) == 2 or float(temperature) < thr):
            if np.ndim(temperature) == 2:
                grid = np.asarray(temperature)

                def cool(gr, gc):
                    m = grid[gr, gc] < thr
                    return m & ~stack.plantation[gr, gc] if daytime else m
            else:
                def cool(gr, gc):
                    return ~stack.plantation[gr, gc] if daytime else np.ones_like(stack.water[gr, gc])
            pools.append(_candidates(agent, directions, p.radius_forest_search, cool, dirs))
        pools.append(_candidates(agent, directions, p.radius_water_search, stack.water, dirs))
        rows = np.concatenate([q[0] for q in pools])
        cols = np.concatenate([q[1] for q in pools])
        if rows.size and len(pools) > 1:
            flat = np.unique(rows * stack.shape[1] + cols)
            rows, cols = flat // stack.shape[1], flat % stack.shape[1]
        if rows.size == 0:
            rows, cols = _candidates(agent, directions, p.radius_forest_search, stack.forest, dirs)
        if rows.size == 0:
            return None
        i = rng.index(rows.size)
        return int(rows[i]), int(cols[i])

    if kind == "escape":
        rows, cols = _candidates(agent, directions, p.radius_forest_search, stack.forest, dirs)
        if rows.size:
            i = rng.index(rows.size)
            return int(rows[i]), int(cols[i])
        here = stack.proximity_forest[agent.row, agent.col]
        rows, cols = _candidates(agent, directions, p.radius_forest_search,
                                 lambda gr, gc: stack.proximity_forest[gr, gc] < here, dirs)
        if rows.size == 0:
            return None
        prox = stack.proximity_forest[rows, cols]
        best = np.flatnonzero(prox == prox.min())
        i = best[rng.index(best.size)]
        return int(rows[i]), int(cols[i])

    raise ValueError(f"unknown target kind {kind!r}")


# ---------------------------------------------------------- feeding, damage


def eat_food(agent: ElephantAgent, food: np.ndarray, rng, stack: Optional[TerrainStack] = None) -> float:
    """Eat a uniform share of the food in the current cell.

    The cell and, if known, its memory entry drop by the same amount.
    Returns the kilograms consumed.
    """
    r, c = agent.row, agent.col
    f = food[r, c]
    if f <= 0.0:
        return 0.0
    rng = _as_random(rng)
    u = rng.uniform() * f
    food[r, c] = f - u
    mem = agent.memory
    if mem.known[r, c]:
        mem.food[r, c] = food[r, c]
    agent.todays_intake += u
    if stack is not None and stack.plantation[r, c]:
        agent.todays_crop_intake += u
    else:
        agent.todays_forest_intake += u
    return u


def inflict_damage(agent: ElephantAgent, stack: TerrainStack, rng, timestamp=None) -> list:
    """Damage events at the current cell as ``(timestamp, kind, x, y)`` tuples."""
    rng = _as_random(rng)
    events = []
    r, c = agent.row, agent.col
    if stack.agri_plots is not None and stack.agri_plots[r, c]:
        if rng.uniform() < agent.params.prob_crop_damage:
            events.append((timestamp, "crop_damage", agent.x, agent.y))
    if stack.buildings[r, c]:
        if rng.uniform() < agent.params.prob_infrastructure_damage:
            events.append((timestamp, "infrastructure_damage", agent.x, agent.y))
    return events


def is_thermoregulating(agent: ElephantAgent, stack: TerrainStack) -> bool:
    """Whether the current tick counts as successful thermoregulation.

    The agent must be in thermoregulation mode and either in forest shade
    or on or beside a water cell.
    """
    if agent.mode is not Mode.THERMOREGULATION:
        return False
    r, c = agent.row, agent.col
    return bool(stack.forest[r, c]) or stack.proximity_water[r, c] <= 1.5 * stack.header.cellsize


def end_of_day_update(agent: ElephantAgent, ticks_per_day: int = TICKS_PER_DAY) -> dict:
    """Credit the day's feeding and thermoregulation to fitness and roll counters.

    Returns a record of the day that was closed.
    """
    a = agent.thermoregulation_steps_today
    y = agent.thermoregulated_steps_today
    x = agent.todays_intake
    ddmi = agent.daily_dry_matter_intake
    food_gain = 0.1 * ((ticks_per_day - a) / ticks_per_day) * (min(x, ddmi) / ddmi)
    thermo_gain = 0.1 * (a / ticks_per_day) * (y / a) if a > 0 else 0.0
    record = {
        "intake_kg": x,
        "forest_intake_kg": agent.todays_forest_intake,
        "crop_intake_kg": agent.todays_crop_intake,
        "thermoregulation_ticks": a,
        "thermoregulated_ticks": y,
        "food_deprivation_days": agent.num_days_food_deprivation,
        "water_visit_days": agent.num_days_water_source_visit,
        "visited_water": agent.visited_water_today,
        "fitness_before": agent.fitness,
    }
    agent.fitness = min(1.0, max(0.0, agent.fitness + food_gain + thermo_gain))
    agent.num_days_food_deprivation = agent.num_days_food_deprivation + 1 if x < ddmi else 0
    agent.num_days_water_source_visit = 0 if agent.visited_water_today else agent.num_days_water_source_visit + 1
    agent.todays_intake = 0.0
    agent.todays_forest_intake = 0.0
    agent.todays_crop_intake = 0.0
    agent.thermoregulation_steps_today = 0
    agent.thermoregulated_steps_today = 0
    agent.visited_water_today = False
    if agent.fitness <= 0.0:
        agent.alive = False
    record["fitness"] = agent.fitness
    return record


def advance_year(agent: ElephantAgent) -> None:
    """Age the agent one year and update weight and daily intake."""
    agent.age += 1
    agent.body_weight = von_bertalanffy_weight(agent.age)
    agent.daily_dry_matter_intake = 0.017 * agent.body_weight
