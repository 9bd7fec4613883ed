"""Raster I/O and static terrain layers.

Grids are stored north-up: row 0 is the northern edge, so the centre of
cell ``(r, c)`` sits at ``(xll + (c + 0.5) * cs, yll + (nrows - r - 0.5) * cs)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import kernels

__all__ = [
    "GridHeader",
    "RasterGrid",
    "LandUseClass",
    "FOREST_CLASSES",
    "TerrainStack",
    "GridFormatError",
    "load_ascii_grid",
    "write_ascii_grid",
    "compute_slope",
    "distance_transform",
    "build_stack",
]


class GridFormatError(ValueError):
    """Raised when an ASCII grid file cannot be parsed."""


@dataclass(frozen=True)
class GridHeader:
    """Georeferencing of a regular raster.

    Attributes
    ----------
    ncols, nrows : int
        Grid dimensions.
    xll, yll : float
        Coordinates of the lower-left corner of the lower-left cell.
    cellsize : float
        Cell edge length in metres.
    nodata : float or None
        Sentinel for missing values, if the source declared one.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: Optional[float] = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def ytop(self) -> float:
        return self.yll + self.nrows * self.cellsize

    @property
    def xright(self) -> float:
        return self.xll + self.ncols * self.cellsize

    def cell_center(self, row, col):
        """Map-coordinate centre of a cell (vectorised)."""
        x = self.xll + (np.asarray(col) + 0.5) * self.cellsize
        y = self.yll + (self.nrows - np.asarray(row) - 0.5) * self.cellsize
        return x, y

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Row and column containing a point; may lie outside the grid."""
        col = math.floor((x - self.xll) / self.cellsize)
        row = math.floor((self.ytop - y) / self.cellsize)
        return row, col

    def contains(self, x: float, y: float) -> bool:
        return self.xll <= x < self.xright and self.yll < y <= self.ytop

    def aligned_with(self, other: "GridHeader") -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and math.isclose(self.xll, other.xll, abs_tol=1e-6)
            and math.isclose(self.yll, other.yll, abs_tol=1e-6)
            and math.isclose(self.cellsize, other.cellsize, rel_tol=1e-9)
        )


@dataclass
class RasterGrid:
    """A header plus a ``(nrows, ncols)`` float64 array."""

    header: GridHeader
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != self.header.shape:
            raise ValueError(
                f"data shape {self.data.shape} does not match header {self.header.shape}"
            )


class LandUseClass(enum.IntEnum):
    """Land-use codes of the classified map, 0 through 18."""

    DECIDUOUS_BROADLEAF_FOREST = 0
    CROPLAND = 1
    BUILT_UP = 2
    MIXED_FOREST = 3
    SHRUBLAND = 4
    BARREN = 5
    FALLOW = 6
    WASTELAND = 7
    WATER_BODIES = 8
    PLANTATIONS = 9
    AQUACULTURE = 10
    MANGROVE = 11
    SALT_PAN = 12
    GRASSLAND = 13
    EVERGREEN_BROADLEAF_FOREST = 14
    DECIDUOUS_NEEDLELEAF_FOREST = 15
    PERMANENT_WETLANDS = 16
    SNOW_AND_ICE = 17
    EVERGREEN_NEEDLELEAF_FOREST = 18


#: Classes treated as food-bearing, shaded forest.
FOREST_CLASSES = (
    LandUseClass.EVERGREEN_BROADLEAF_FOREST,
    LandUseClass.DECIDUOUS_BROADLEAF_FOREST,
    LandUseClass.MIXED_FOREST,
)

_HEADER_KEYS = {
    "ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
    "cellsize", "nodata_value",
}


def _parse_header(lines: list[str], path) -> tuple[dict, int]:
    values: dict[str, float] = {}
    consumed = 0
    for line in lines:
        parts = line.split()
        if not parts:
            consumed += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        if len(parts) != 2:
            raise GridFormatError(f"{path}: malformed header line {line.strip()!r}")
        try:
            values[key] = float(parts[1])
        except ValueError as exc:
            raise GridFormatError(f"{path}: bad header value {line.strip()!r}") from exc
        consumed += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in values:
            raise GridFormatError(f"{path}: header is missing {key}")
    if ("xllcorner" in values) == ("xllcenter" in values):
        raise GridFormatError(f"{path}: header needs exactly one of xllcorner/xllcenter")
    if ("yllcorner" in values) == ("yllcenter" in values):
        raise GridFormatError(f"{path}: header needs exactly one of yllcorner/yllcenter")
    return values, consumed


def load_ascii_grid(path: Union[str, Path], nodata_policy: Union[str, float] = "min") -> RasterGrid:
    """Read an ESRI ASCII grid.

    Parameters
    ----------
    path : str or Path
        File to read.
    nodata_policy : {"min", "keep"} or float
        What to do with cells equal to ``NODATA_value``. ``"min"`` replaces
        them with the minimum of the valid cells, ``"keep"`` leaves the
        sentinel, and a number substitutes that value.

    Returns
    -------
    RasterGrid

    Raises
    ------
    GridFormatError
        On a malformed header, a non-numeric token or a value count that
        does not match ``ncols * nrows``.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    values, consumed = _parse_header(lines, path)
    ncols, nrows = int(values["ncols"]), int(values["nrows"])
    if ncols != values["ncols"] or nrows != values["nrows"] or ncols < 1 or nrows < 1:
        raise GridFormatError(f"{path}: ncols/nrows must be positive integers")
    cs = values["cellsize"]
    if not cs > 0:
        raise GridFormatError(f"{path}: cellsize must be positive")
    xll = values["xllcorner"] if "xllcorner" in values else values["xllcenter"] - 0.5 * cs
    yll = values["yllcorner"] if "yllcorner" in values else values["yllcenter"] - 0.5 * cs
    nodata = values.get("nodata_value")

    rows = [ln.split() for ln in lines[consumed:] if ln.strip()]
    if len(rows) != nrows or any(len(r) != ncols for r in rows):
        tokens = sum(len(r) for r in rows)
        raise GridFormatError(
            f"{path}: expected {nrows} rows of {ncols} values, found {len(rows)} rows"
            f" with {tokens} values"
        )
    try:
        data = np.array([[float(tok) for tok in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise GridFormatError(f"{path}: non-numeric token ({exc})") from exc

    header = GridHeader(ncols, nrows, xll, yll, cs, nodata)
    if nodata is not None and nodata_policy != "keep":
        missing = data == nodata
        if missing.any():
            if nodata_policy == "min":
                valid = data[~missing]
                fill = valid.min() if valid.size else 0.0
            elif isinstance(nodata_policy, (int, float)) and math.isfinite(nodata_policy):
                fill = float(nodata_policy)
            else:
                raise ValueError(f"unknown nodata policy {nodata_policy!r}")
            data[missing] = fill
    return RasterGrid(header, data)


def write_ascii_grid(grid: RasterGrid, path: Union[str, Path]) -> None:
    """Write an ESRI ASCII grid whose values read back bit-identically."""
    h = grid.header
    lines = [
        f"ncols {h.ncols}",
        f"nrows {h.nrows}",
        f"xllcorner {h.xll!r}",
        f"yllcorner {h.yll!r}",
        f"cellsize {h.cellsize!r}",
    ]
    if h.nodata is not None:
        lines.append(f"NODATA_value {h.nodata!r}")
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in grid.data)
    Path(path).write_text("\n".join(lines) + "\n" + body + "\n")


def compute_slope(dem: RasterGrid) -> RasterGrid:
    """Horn slope in degrees, with edge cells padded by replication.

    Raises
    ------
    ValueError
        If the grid is smaller than 2 x 2.
    """
    z = dem.data
    if z.shape[0] < 2 or z.shape[1] < 2:
        raise ValueError("slope needs a grid of at least 2 x 2 cells")
    p = np.pad(z, 1, mode="edge")
    a, b, c = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    d, f = p[1:-1, :-2], p[1:-1, 2:]
    g, h, i = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    cs = dem.header.cellsize
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8.0 * cs)
    dzdy = ((g + 2 * h + i) - (a + 2 * b + c)) / (8.0 * cs)
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))
    return RasterGrid(replace(dem.header, nodata=None), slope)


def distance_transform(mask: np.ndarray, cellsize: float) -> np.ndarray:
    """Exact Euclidean distance in metres from every cell to the nearest set cell.

    Raises
    ------
    ValueError
        If the mask has no set cells.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("distance transform of an empty mask is undefined")
    sq = kernels.edt_squared(np.ascontiguousarray(mask, dtype=np.uint8))
    return np.sqrt(sq) * cellsize


def _proximity(mask: np.ndarray, cellsize: float) -> np.ndarray:
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return distance_transform(mask, cellsize)


@dataclass(frozen=True)
class TerrainStack:
    """Aligned static layers the agent reads every tick.

    Proximity layers hold metres to the nearest cell of the class and are
    ``inf`` everywhere when the class is absent. ``agri_plots`` marks
    home-garden cells and is filled in by the environment module.
    """

    header: GridHeader
    elevation: np.ndarray
    slope: np.ndarray
    landuse: np.ndarray
    water: np.ndarray
    forest: np.ndarray
    plantation: np.ndarray
    buildings: np.ndarray
    proximity_plantation: np.ndarray
    proximity_forest: np.ndarray
    proximity_water: np.ndarray
    agri_plots: np.ndarray = field(default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.header.shape

    def with_agri_plots(self, agri_plots: np.ndarray) -> "TerrainStack":
        agri = np.asarray(agri_plots, dtype=bool)
        if agri.shape != self.shape:
            raise ValueError("agri-plot mask does not match the terrain grid")
        return replace(self, agri_plots=agri)


def build_stack(
    elevation: RasterGrid,
    landuse: RasterGrid,
    buildings: Optional[RasterGrid] = None,
) -> TerrainStack:
    """Derive slope, class masks and proximity maps from the input rasters.

    Raises
    ------
    ValueError
        If the grids are not aligned or land-use codes fall outside 0-18.
    """
    h = elevation.header
    if not h.aligned_with(landuse.header):
        raise ValueError("elevation and land-use grids are not aligned")
    if buildings is not None and not h.aligned_with(buildings.header):
        raise ValueError("elevation and building grids are not aligned")
    lu = landuse.data
    if not np.all(np.isfinite(lu)) or np.any(lu != np.round(lu)):
        raise ValueError("land-use codes must be integers")
    codes = lu.astype(np.int64)
    if codes.min() < 0 or codes.max() > max(LandUseClass):
        raise ValueError("land-use codes must lie in 0-18")
    water = codes == LandUseClass.WATER_BODIES
    forest = np.isin(codes, [int(c) for c in FOREST_CLASSES])
    plantation = codes == LandUseClass.PLANTATIONS
    if buildings is None:
        bmask = np.zeros(h.shape, dtype=bool)
    else:
        bmask = np.nan_to_num(buildings.data) > 0
    cs = h.cellsize
    stack = TerrainStack(
        header=replace(h, nodata=None),
        elevation=elevation.data.copy(),
        slope=compute_slope(elevation).data,
        landuse=codes,
        water=water,
        forest=forest,
        plantation=plantation,
        buildings=bmask,
        proximity_plantation=_proximity(plantation, cs),
        proximity_forest=_proximity(forest, cs),
        proximity_water=_proximity(water, cs),
        agri_plots=np.zeros(h.shape, dtype=bool),
    )
    for arr in (stack.elevation, stack.slope, stack.landuse, stack.water, stack.forest,
                stack.plantation, stack.buildings, stack.proximity_plantation,
                stack.proximity_forest, stack.proximity_water):
        arr.setflags(write=False)
    return stack
