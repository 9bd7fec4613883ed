"""Dynamic landscape: food, home gardens, temperature and human disturbance.

Also builds small synthetic landscapes so the whole model can be exercised
without field GIS data.
"""
from __future__ import annotations

import datetime as _dt
import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .terrain import (
    GridHeader,
    LandUseClass,
    RasterGrid,
    TerrainStack,
    build_stack,
)

__all__ = [
    "ScenarioConfig",
    "SCENARIOS",
    "AgriCategory",
    "DEFAULT_AGRI_FRACTIONS",
    "TemperatureModel",
    "DEFAULT_MONTHLY_TEMPERATURE",
    "DisturbanceSchedule",
    "SyntheticLandscapeSpec",
    "assign_agri_plots",
    "init_food",
    "temperature_at",
    "temperature_field",
    "disturbance_at",
    "generate_synthetic_landscape",
    "food_density_t_per_km2",
]


@dataclass(frozen=True)
class ScenarioConfig:
    """Food availability for one scenario.

    Attributes
    ----------
    forest_food_percent : float
        Probability that a forest cell holds food.
    cropland_food_percent : float
        Probability that a home-garden cell holds food.
    forest_max_food_value, cropland_max_food_value : float
        Upper bound (kg) of the uniform food amount in occupied cells.
    """

    forest_food_percent: float = 0.1
    cropland_food_percent: float = 0.3
    forest_max_food_value: float = 5.0
    cropland_max_food_value: float = 100.0

    def __post_init__(self):
        for name in ("forest_food_percent", "cropland_food_percent"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("forest_max_food_value", "cropland_max_food_value"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def named(cls, name: str) -> "ScenarioConfig":
        """One of the five food scenarios ``"S1"`` to ``"S5"``."""
        try:
            return SCENARIOS[name.upper()]
        except KeyError:
            raise ValueError(f"unknown scenario {name!r}; expected S1-S5") from None


SCENARIOS = {
    f"S{i}": ScenarioConfig(forest_max_food_value=float(5 * i)) for i in range(1, 6)
}


class AgriCategory(enum.Enum):
    """Plantation plot classes by rubber canopy share.

    The value is the probability that a plot of that class is a home garden,
    taken as one minus the midpoint of its rubber share.
    """

    NONE = "None"
    HG = "HG"
    RUBBER_0_25 = "0-25rubberXHG"
    RUBBER_25_50 = "25-50rubberXHG"
    RUBBER_50_75 = "50-75rubberXHG"
    RUBBER_75_100 = "75-100rubberXHG"
    RUBBER_100 = "100rubber"

    @property
    def home_garden_probability(self) -> float:
        bounds = {
            AgriCategory.RUBBER_0_25: (0.0, 0.25),
            AgriCategory.RUBBER_25_50: (0.25, 0.5),
            AgriCategory.RUBBER_50_75: (0.5, 0.75),
            AgriCategory.RUBBER_75_100: (0.75, 1.0),
        }
        if self is AgriCategory.HG:
            return 1.0
        if self in bounds:
            lo, hi = bounds[self]
            return 1.0 - (lo + hi) / 2.0
        return 0.0

    @classmethod
    def parse(cls, key: Union[str, "AgriCategory"]) -> "AgriCategory":
        if isinstance(key, cls):
            return key
        for member in cls:
            if key in (member.value, member.name):
                return member
        raise ValueError(f"unknown agricultural plot category {key!r}")


#: Shares of the seven plot classes. The three dominant classes follow the
#: field survey; the remaining 17.8 % is split so the expected home-garden
#: share of the plantation area comes out near 35 %.
DEFAULT_AGRI_FRACTIONS: dict = {
    AgriCategory.NONE: 0.039,
    AgriCategory.HG: 0.050,
    AgriCategory.RUBBER_0_25: 0.050,
    AgriCategory.RUBBER_25_50: 0.157,
    AgriCategory.RUBBER_50_75: 0.296,
    AgriCategory.RUBBER_75_100: 0.369,
    AgriCategory.RUBBER_100: 0.039,
}


def _normalise_fractions(fractions: Mapping) -> tuple[list[AgriCategory], np.ndarray]:
    cats = [AgriCategory.parse(k) for k in fractions]
    shares = np.array([float(v) for v in fractions.values()])
    if len(set(cats)) != len(cats):
        raise ValueError("duplicate agricultural plot category")
    if np.any(shares < 0) or abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError(f"category fractions must be nonnegative and sum to 1, got {shares.sum()!r}")
    return cats, shares


def assign_agri_plots(
    landuse: Union[RasterGrid, np.ndarray],
    fractions: Optional[Mapping] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Mark plantation cells that are home gardens.

    Each plantation cell draws a plot class from ``fractions`` and then
    becomes a home garden with that class's probability.

    Parameters
    ----------
    landuse : RasterGrid or ndarray
        Land-use codes.
    fractions : mapping, optional
        Class (``AgriCategory`` or its label) to share. Defaults to
        :data:`DEFAULT_AGRI_FRACTIONS`.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of bool
        Home-garden mask, a subset of the plantation cells.
    """
    codes = landuse.data if isinstance(landuse, RasterGrid) else np.asarray(landuse)
    rng = np.random.default_rng() if rng is None else rng
    cats, shares = _normalise_fractions(DEFAULT_AGRI_FRACTIONS if fractions is None else fractions)
    plantation = codes == LandUseClass.PLANTATIONS
    n = int(plantation.sum())
    probs = np.array([c.home_garden_probability for c in cats])
    drawn = rng.choice(len(cats), size=n, p=shares / shares.sum())
    is_garden = rng.random(n) < probs[drawn]
    mask = np.zeros(codes.shape, dtype=bool)
    mask[plantation] = is_garden
    return mask


def init_food(stack: TerrainStack, scenario: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Fresh food grid (kg per cell) for one replicate.

    Presence and amount are drawn for every cell of the grid and then
    masked, so two scenarios run with the same seed differ only through
    their parameters.
    """
    shape = stack.shape
    presence = rng.random(shape)
    amount = rng.random(shape)
    food = np.zeros(shape)
    forest = stack.forest & (presence < scenario.forest_food_percent)
    food[forest] = amount[forest] * scenario.forest_max_food_value
    gardens = stack.agri_plots if stack.agri_plots is not None else np.zeros(shape, bool)
    crop = gardens & ~stack.forest & (presence < scenario.cropland_food_percent)
    food[crop] = amount[crop] * scenario.cropland_max_food_value
    return food


def food_density_t_per_km2(food: np.ndarray, mask: np.ndarray, cellsize: float) -> float:
    """Tonnes of food per square kilometre over the cells in ``mask``."""
    cells = int(np.count_nonzero(mask))
    if cells == 0:
        return 0.0
    area_km2 = cells * (cellsize / 1000.0) ** 2
    return float(food[mask].sum()) / 1000.0 / area_km2


# Monthly climatology (tmin, tmax in deg C) for a humid tropical foothill
# site: hot dry season February to May, cooler monsoon June to September.
DEFAULT_MONTHLY_TEMPERATURE = {
    1: (21.0, 31.0), 2: (22.0, 33.0), 3: (23.0, 35.0), 4: (24.0, 35.0),
    5: (24.0, 34.0), 6: (23.0, 30.0), 7: (22.0, 29.0), 8: (22.0, 29.0),
    9: (22.0, 30.0), 10: (22.0, 30.0), 11: (22.0, 30.0), 12: (21.0, 31.0),
}

_Temp = Union[float, np.ndarray]


@dataclass(frozen=True)
class TemperatureModel:
    """Monthly minimum and maximum temperature with a cosine diurnal curve.

    ``monthly`` maps month (1-12) to ``(tmin, tmax)``; each may be a scalar
    or a grid aligned with the terrain.
    """

    monthly: Mapping[int, tuple] = field(default_factory=lambda: dict(DEFAULT_MONTHLY_TEMPERATURE))
    min_hour: float = 5.0
    max_hour: float = 17.0

    def __post_init__(self):
        if not math.isclose((self.max_hour - self.min_hour) % 24, 12.0):
            raise ValueError("the cosine curve needs max_hour = min_hour + 12")
        for month, (tmin, tmax) in self.monthly.items():
            if not 1 <= int(month) <= 12:
                raise ValueError(f"month {month} outside 1-12")
            if np.any(np.asarray(tmax) < np.asarray(tmin)):
                raise ValueError(f"tmax below tmin in month {month}")

    @classmethod
    def uniform(cls, tmin: float, tmax: float, months=range(1, 13)) -> "TemperatureModel":
        return cls({int(m): (float(tmin), float(tmax)) for m in months})

    def is_uniform(self, month: int) -> bool:
        tmin, tmax = self.bounds(month)
        return np.ndim(tmin) == 0 and np.ndim(tmax) == 0

    def bounds(self, month: int) -> tuple:
        if not 1 <= month <= 12:
            raise ValueError(f"month {month} outside 1-12")
        try:
            return self.monthly[month]
        except KeyError:
            raise ValueError(f"no temperature data for month {month}") from None

    def diurnal_weight(self, hour: float) -> float:
        """Cosine factor in [-1, 1]; -1 at the daily minimum."""
        if not 0 <= hour < 24:
            raise ValueError(f"hour {hour} outside 0-23")
        return -math.cos(2.0 * math.pi * (hour - self.min_hour) / 24.0)


def temperature_at(model: TemperatureModel, cell, month: int, hour: float) -> float:
    """Air temperature (deg C) at one cell.

    ``T = (tmax + tmin) / 2 - (tmax - tmin) / 2 * cos(2 pi (hour - min_hour) / 24)``.
    ``cell`` is a ``(row, col)`` pair; it is ignored for scalar months.
    """
    w = model.diurnal_weight(hour)
    tmin, tmax = model.bounds(month)
    if np.ndim(tmin) or np.ndim(tmax):
        r, c = cell
        tmin = np.asarray(tmin)[r, c] if np.ndim(tmin) else tmin
        tmax = np.asarray(tmax)[r, c] if np.ndim(tmax) else tmax
    return float((tmax + tmin) / 2.0 + (tmax - tmin) / 2.0 * w)


def temperature_field(model: TemperatureModel, month: int, hour: float) -> _Temp:
    """Temperature for every cell (or a scalar for uniform months)."""
    w = model.diurnal_weight(hour)
    tmin, tmax = model.bounds(month)
    tmin, tmax = np.asarray(tmin, float), np.asarray(tmax, float)
    out = (tmax + tmin) / 2.0 + (tmax - tmin) / 2.0 * w
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Human disturbance: high in the daytime window, low otherwise."""

    day_level: float = 1.0
    night_level: float = 0.0
    day_start: float = 7.0
    day_end: float = 19.0

    def __post_init__(self):
        if not self.day_level > self.night_level:
            raise ValueError("day_level must exceed night_level")
        if not 0 <= self.day_start < self.day_end <= 24:
            raise ValueError("need 0 <= day_start < day_end <= 24")


def _hour_of(time_of_day) -> float:
    if isinstance(time_of_day, (_dt.datetime, _dt.time)):
        return time_of_day.hour + time_of_day.minute / 60.0 + time_of_day.second / 3600.0
    h = float(time_of_day)
    if not 0 <= h < 24:
        raise ValueError(f"time of day {h} outside [0, 24)")
    return h


def disturbance_at(schedule: DisturbanceSchedule, time_of_day) -> float:
    """Disturbance level at a clock time (``datetime``, ``time`` or decimal hours).

    The daytime window is half-open, ``[day_start, day_end)``.
    """
    h = _hour_of(time_of_day)
    return schedule.day_level if schedule.day_start <= h < schedule.day_end else schedule.night_level


@dataclass(frozen=True)
class SyntheticLandscapeSpec:
    """Layout of a synthetic test landscape.

    Columns run west to east: forest on the west, a plantation strip of
    ``plantation_share`` of the columns on the east. A north-south river one
    cell wide meanders through the forest around ``river_col``, and a
    north-south ridge with a pass in the middle rises at ``ridge_col``.
    Unset columns default to fixed fractions of the forest width, with the
    default start between the river and the fringe.
    """

    nrows: int = 200
    ncols: int = 200
    cellsize: float = 30.0
    xll: float = 0.0
    yll: float = 0.0
    plantation_share: float = 0.3
    ridge_height: float = 300.0
    ridge_col: Optional[int] = None
    ridge_halfwidth: int = 8
    ridge_pass_rows: int = 20
    river: bool = True
    river_col: Optional[int] = None
    base_elevation: float = 200.0
    tilt_per_cell: float = 0.25
    building_share: float = 0.03
    deciduous_share: float = 0.3
    agri_fractions: Optional[Mapping] = None

    @property
    def fringe_col(self) -> int:
        """First plantation column."""
        return self.ncols - int(round(self.plantation_share * self.ncols))

    @property
    def resolved_ridge_col(self) -> int:
        return self.ridge_col if self.ridge_col is not None else int(round(0.15 * self.fringe_col))

    @property
    def resolved_river_col(self) -> int:
        return self.river_col if self.river_col is not None else int(round(0.35 * self.fringe_col))

    def default_start(self) -> tuple[float, float]:
        """Forest start point on the middle row, 57 % of the way across the forest."""
        col = int(round(0.57 * self.fringe_col))
        row = self.nrows // 2
        x = self.xll + (col + 0.5) * self.cellsize
        y = self.yll + (self.nrows - row - 0.5) * self.cellsize
        return x, y


def _smooth_noise(rng: np.random.Generator, shape, scale: int) -> np.ndarray:
    coarse = rng.random((shape[0] // scale + 2, shape[1] // scale + 2))
    rows = np.linspace(0, coarse.shape[0] - 1.001, shape[0])
    cols = np.linspace(0, coarse.shape[1] - 1.001, shape[1])
    r0, c0 = rows.astype(int), cols.astype(int)
    fr, fc = (rows - r0)[:, None], (cols - c0)[None, :]
    a = coarse[r0][:, c0]
    b = coarse[r0][:, c0 + 1]
    c = coarse[r0 + 1][:, c0]
    d = coarse[r0 + 1][:, c0 + 1]
    return (a * (1 - fc) + b * fc) * (1 - fr) + (c * (1 - fc) + d * fc) * fr


def generate_synthetic_landscape(
    spec: SyntheticLandscapeSpec = SyntheticLandscapeSpec(),
    rng: Union[np.random.Generator, int, None] = 0,
) -> tuple[TerrainStack, np.ndarray]:
    """Build a terrain stack and home-garden mask from ``spec``.

    Returns
    -------
    stack : TerrainStack
        With ``agri_plots`` already set to the home-garden mask.
    home_gardens : ndarray of bool

    Raises
    ------
    ValueError
        If the grid is smaller than 20 x 20 or the layout does not fit.
    """
    if spec.nrows < 20 or spec.ncols < 20:
        raise ValueError("synthetic landscapes need at least 20 x 20 cells")
    if not 0.0 <= spec.plantation_share < 1.0:
        raise ValueError("plantation_share must lie in [0, 1)")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    nr, nc, cs = spec.nrows, spec.ncols, spec.cellsize
    fringe = spec.fringe_col

    landuse = np.full((nr, nc), int(LandUseClass.EVERGREEN_BROADLEAF_FOREST), dtype=np.int64)
    patches = _smooth_noise(rng, (nr, nc), 12) < spec.deciduous_share
    landuse[patches] = int(LandUseClass.DECIDUOUS_BROADLEAF_FOREST)
    landuse[:, fringe:] = int(LandUseClass.PLANTATIONS)

    if spec.river:
        river_col = spec.resolved_river_col
        if not 0 <= river_col < fringe:
            raise ValueError("river does not fit inside the forest block")
        knots_r = np.arange(0, nr + 20, 20)
        knots_c = river_col + rng.integers(-4, 5, size=knots_r.size)
        cols = np.rint(np.interp(np.arange(nr), knots_r, knots_c)).astype(int)
        cols = np.clip(cols, 0, fringe - 1)
        landuse[np.arange(nr), cols] = int(LandUseClass.WATER_BODIES)

    col_idx = np.arange(nc, dtype=float)
    elev = spec.base_elevation + spec.tilt_per_cell * (nc - 1 - col_idx)[None, :] * np.ones((nr, 1))
    if spec.ridge_height > 0:
        ridge_col = spec.resolved_ridge_col
        profile = np.clip(1.0 - np.abs(col_idx - ridge_col) / spec.ridge_halfwidth, 0.0, None)
        ridge = spec.ridge_height * profile[None, :] * np.ones((nr, 1))
        mid = nr // 2
        half = spec.ridge_pass_rows // 2
        ridge[max(0, mid - half):mid + half, :] = 0.0
        elev = elev + ridge

    buildings = np.zeros((nr, nc))
    plant = landuse == LandUseClass.PLANTATIONS
    buildings[plant & (rng.random((nr, nc)) < spec.building_share)] = 1.0

    header = GridHeader(nc, nr, spec.xll, spec.yll, cs, None)
    stack = build_stack(
        RasterGrid(header, elev),
        RasterGrid(header, landuse.astype(float)),
        RasterGrid(header, buildings),
    )
    gardens = assign_agri_plots(landuse, spec.agri_fractions, rng)
    return stack.with_agri_plots(gardens), gardens
