"""
Study Area Module
=================
Spatial data model for tree placement: single-band rasters, land cover,
study areas, tree geometry rasterization and placement feasibility.

All raster types are immutable after construction. Operations that change
vegetation return a new StudyArea instead of editing arrays in place.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Optional, Tuple

import numpy as np

from planting_errors import InfeasiblePlacementError, InputDataError

if TYPE_CHECKING:
    from shadow_engine import SvfMaps

logger = logging.getLogger(__name__)

CELL_SIZE = 1.0
NODATA_VALUE = -9999.0
DEFAULT_LATITUDE = 48.0
DEFAULT_LONGITUDE = 11.5

RASTER_FILES = {
    'dem': 'dem.asc',
    'dsm_ground_buildings': 'dsm_build.asc',
    'dsm_vegetation': 'dsm_veg.asc',
    'land_cover': 'landcover.asc',
    'wall_height': 'wall_height.asc',
    'wall_aspect': 'wall_aspect.asc',
}
LOCATION_FILE = 'location.txt'

Cell = Tuple[int, int]


class LandCoverClass(IntEnum):
    """Land cover codes as stored in landcover.asc."""
    PAVED = 0
    BUILDING = 1
    GRASS = 2
    BARE_SOIL = 3
    WATER = 4


@dataclass(frozen=True, eq=False)
class Grid:
    """A single-band raster at 1 m resolution, row 0 is the northern edge."""
    values: np.ndarray
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cell_size: float = CELL_SIZE
    nodata: float = NODATA_VALUE

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise InputDataError(f"Grid needs a non-empty 2-D array, got shape {values.shape}")
        if not math.isclose(self.cell_size, CELL_SIZE):
            raise InputDataError(f"Only {CELL_SIZE} m cells are supported, got {self.cell_size}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> 'Grid':
        """Return a grid with the same header and new values."""
        return replace(self, values=values)

    def __repr__(self):
        return f"Grid({self.height}x{self.width})"


@dataclass(frozen=True)
class TreeGeometry:
    """Shared geometry of all planted trees (spherical crown on a trunk)."""
    height: float = 12.0
    crown_diameter: float = 9.0
    trunk_height_fraction: float = 0.25
    crown_shape: str = 'spherical'

    def __post_init__(self):
        if self.crown_diameter <= 0:
            raise InputDataError(f"crown_diameter must be positive, got {self.crown_diameter}")
        if not 0 < self.trunk_height_fraction < 1:
            raise InputDataError(f"trunk_height_fraction must lie in (0, 1), got {self.trunk_height_fraction}")
        if self.height <= 0:
            raise InputDataError(f"height must be positive, got {self.height}")
        if self.crown_shape != 'spherical':
            raise InputDataError(f"unsupported crown shape: {self.crown_shape}")

    @property
    def trunk_height(self) -> float:
        return self.trunk_height_fraction * self.height

    @property
    def crown_radius(self) -> float:
        return self.crown_diameter / 2.0


@dataclass(frozen=True)
class TreePlacement:
    """k tree centres (row, col) sharing one TreeGeometry."""
    positions: Tuple[Cell, ...]
    geometry: TreeGeometry = field(default_factory=TreeGeometry)

    def __post_init__(self):
        positions = tuple((int(r), int(c)) for r, c in self.positions)
        object.__setattr__(self, 'positions', positions)

    @property
    def k(self) -> int:
        return len(self.positions)

    @property
    def position_set(self) -> frozenset:
        return frozenset(self.positions)

    def moved(self, tree_index: int, new_position: Cell) -> 'TreePlacement':
        positions = list(self.positions)
        positions[tree_index] = (int(new_position[0]), int(new_position[1]))
        return replace(self, positions=tuple(positions))

    def __repr__(self):
        return f"TreePlacement(k={self.k}, {list(self.positions)})"


@dataclass(frozen=True)
class FeasibilityVerdict:
    """Outcome of validate_placement; reason names the first violation."""
    feasible: bool
    reason: str = ''
    tree_index: Optional[int] = None

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True)
class CanopyPatch:
    """Canopy-top heights of one rasterized tree, anchored at (row0, col0)."""
    row0: int
    col0: int
    values: np.ndarray

    @property
    def slices(self) -> Tuple[slice, slice]:
        return (slice(self.row0, self.row0 + self.values.shape[0]),
                slice(self.col0, self.col0 + self.values.shape[1]))


@dataclass(frozen=True, eq=False)
class StudyArea:
    """Bundle of co-registered spatial inputs plus geolocation."""
    dem: Grid
    dsm_ground_buildings: Grid
    dsm_vegetation: Grid
    land_cover: Grid
    wall_height: Grid
    wall_aspect: Grid
    latitude: float = DEFAULT_LATITUDE
    longitude: float = DEFAULT_LONGITUDE
    svf: Optional['SvfMaps'] = None
    svf_stale: bool = False

    def __post_init__(self):
        shape = self.dem.shape
        for name in RASTER_FILES:
            grid = getattr(self, name)
            if grid.shape != shape:
                raise InputDataError(
                    f"dimension mismatch: {RASTER_FILES[name]} is {grid.shape}, dem.asc is {shape}")
        codes = self.land_cover.values
        unknown = np.setdiff1d(np.unique(codes), [c.value for c in LandCoverClass])
        if unknown.size:
            raise InputDataError(f"unknown land-cover code {unknown[0]:g}")
        veg = self.dsm_vegetation.values
        if (veg < 0).any():
            raise InputDataError("vegetation DSM has negative heights")
        if (veg[self.building_mask] != 0).any():
            raise InputDataError("vegetation DSM must be 0 on building cells")
        if (self.wall_height.values < 0).any():
            raise InputDataError("wall height has negative values")
        aspect = self.wall_aspect.values
        if ((aspect < 0) | (aspect >= 360)).any():
            raise InputDataError("wall aspect must lie in [0, 360)")
        if abs(self.latitude) > 90:
            raise InputDataError(f"latitude out of range: {self.latitude}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.dem.shape

    @property
    def land_cover_codes(self) -> np.ndarray:
        return self.land_cover.values.astype(np.int8)

    @property
    def building_mask(self) -> np.ndarray:
        return self.land_cover.values == LandCoverClass.BUILDING

    @property
    def water_mask(self) -> np.ndarray:
        return self.land_cover.values == LandCoverClass.WATER

    def with_vegetation(self, dsm_vegetation: np.ndarray) -> 'StudyArea':
        """Return a copy with a new vegetation DSM; existing SVF maps become stale."""
        return replace(self,
                       dsm_vegetation=self.dsm_vegetation.with_values(dsm_vegetation),
                       svf_stale=self.svf is not None)

    def with_svf(self, svf: 'SvfMaps') -> 'StudyArea':
        return replace(self, svf=svf, svf_stale=False)

    def __repr__(self):
        return f"StudyArea({self.shape[0]}x{self.shape[1]}, lat={self.latitude}, lon={self.longitude})"


def valid_cell_mask(area: StudyArea) -> np.ndarray:
    """Cells that count for objectives and metrics: no buildings, no open water."""
    return ~(area.building_mask | area.water_mask)


def crown_area(geometry: TreeGeometry) -> float:
    """Nominal canopy footprint of one tree in m²."""
    return math.pi * geometry.crown_radius ** 2


# --- ESRI ASCII grid I/O ---

_HEADER_KEYS = ('ncols', 'nrows', 'xllcorner', 'yllcorner', 'cellsize', 'nodata_value')


def read_ascii_grid(path) -> Grid:
    """
    Read an ESRI ASCII grid.

    Args:
        path: Path to the .asc file

    Returns:
        Grid with the file's header and values
    """
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"missing raster file: {path.name}")

    header: Dict[str, float] = {}
    with open(path, 'r') as handle:
        for _ in range(len(_HEADER_KEYS)):
            parts = handle.readline().split()
            if len(parts) != 2:
                raise InputDataError(f"malformed header in {path.name}")
            key = parts[0].lower().replace('xllcenter', 'xllcorner').replace('yllcenter', 'yllcorner')
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise InputDataError(f"malformed header value '{parts[1]}' in {path.name}")

    missing = [key for key in _HEADER_KEYS if key not in header]
    if missing:
        raise InputDataError(f"malformed header in {path.name}: missing {', '.join(missing)}")

    ncols, nrows = int(header['ncols']), int(header['nrows'])
    try:
        values = np.loadtxt(path, skiprows=len(_HEADER_KEYS), ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise InputDataError(f"unparsable values in {path.name}: {e}")
    if values.shape != (nrows, ncols):
        raise InputDataError(
            f"{path.name}: header says {nrows}x{ncols} but found {values.shape[0]}x{values.shape[1]} values")

    return Grid(values=values,
                xllcorner=header['xllcorner'],
                yllcorner=header['yllcorner'],
                cell_size=header['cellsize'],
                nodata=header['nodata_value'])


def write_ascii_grid(grid: Grid, path, fmt: str = '%.4f') -> None:
    """Write a grid as ESRI ASCII with fixed formatting so reruns are byte-identical."""
    header = (
        f"ncols         {grid.width}\n"
        f"nrows         {grid.height}\n"
        f"xllcorner     {grid.xllcorner:.6f}\n"
        f"yllcorner     {grid.yllcorner:.6f}\n"
        f"cellsize      {grid.cell_size:.6f}\n"
        f"NODATA_value  {grid.nodata:.6f}"
    )
    np.savetxt(path, grid.values, fmt=fmt, delimiter=' ', header=header, comments='')


def load_study_area(directory_path, latitude: Optional[float] = None,
                    longitude: Optional[float] = None) -> StudyArea:
    """
    Load and validate a study area directory.

    Reads the six ESRI ASCII rasters, the optional location.txt and the
    optional SVF rasters. Missing SVF files leave the area without SVF maps.

    Args:
        directory_path: Directory containing the raster files
        latitude: Overrides location.txt when given
        longitude: Overrides location.txt when given

    Returns:
        Validated StudyArea
    """
    directory = Path(directory_path)
    if not directory.is_dir():
        raise InputDataError(f"area directory not found: {directory}")

    grids = {name: read_ascii_grid(directory / filename) for name, filename in RASTER_FILES.items()}

    location = {'latitude': DEFAULT_LATITUDE, 'longitude': DEFAULT_LONGITUDE}
    location_path = directory / LOCATION_FILE
    if location_path.exists():
        for line in location_path.read_text().splitlines():
            parts = line.split()
            if len(parts) == 2 and parts[0].lower() in location:
                location[parts[0].lower()] = float(parts[1])
    if latitude is not None:
        location['latitude'] = latitude
    if longitude is not None:
        location['longitude'] = longitude

    area = StudyArea(**grids, **location)

    from shadow_engine import SVF_FILES, SvfMaps
    svf_paths = {name: directory / filename for name, filename in SVF_FILES.items()}
    if all(p.exists() for p in svf_paths.values()):
        svf_grids = {name: read_ascii_grid(p) for name, p in svf_paths.items()}
        for name, grid in svf_grids.items():
            if grid.shape != area.shape:
                raise InputDataError(f"dimension mismatch: {SVF_FILES[name]} is {grid.shape}")
        area = area.with_svf(SvfMaps(**{name: g.values for name, g in svf_grids.items()}))

    logger.info("loaded %r from %s", area, directory)
    return area


def save_study_area(area: StudyArea, directory_path) -> None:
    """Write all rasters, location.txt and (when present) the SVF maps."""
    directory = Path(directory_path)
    directory.mkdir(parents=True, exist_ok=True)
    for name, filename in RASTER_FILES.items():
        fmt = '%d' if name == 'land_cover' else '%.4f'
        write_ascii_grid(getattr(area, name), directory / filename, fmt=fmt)
    (directory / LOCATION_FILE).write_text(
        f"latitude {area.latitude:.6f}\nlongitude {area.longitude:.6f}\n")
    if area.svf is not None and not area.svf_stale:
        from shadow_engine import write_svf
        write_svf(area.svf, directory, template=area.dem)


# --- Tree rasterization and placement ---

@lru_cache(maxsize=64)
def crown_offsets(geometry: TreeGeometry) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Offsets (drow, dcol) of all cells covered by a crown and their canopy-top heights.

    A cell is covered when its centre lies inside the crown disc. The crown is a
    spheroid centred at trunk + (height - trunk) / 2 whose top reaches `height`
    at the centre cell.
    """
    radius = geometry.crown_radius
    reach = int(math.floor(radius + 1e-9))
    dr, dc = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    rho = np.hypot(dr, dc)
    inside = rho <= radius + 1e-9

    half_depth = (geometry.height - geometry.trunk_height) / 2.0
    centre_height = geometry.trunk_height + half_depth
    ratio = np.clip(rho[inside] / radius, 0.0, 1.0)
    heights = centre_height + half_depth * np.sqrt(1.0 - ratio ** 2)

    drs, dcs = dr[inside].astype(np.int64), dc[inside].astype(np.int64)
    for arr in (drs, dcs, heights):
        arr.setflags(write=False)
    return drs, dcs, heights


def rasterize_tree(geometry: TreeGeometry, position: Cell,
                   shape: Optional[Tuple[int, int]] = None) -> CanopyPatch:
    """
    Rasterize one tree as a patch of canopy-top heights.

    Args:
        geometry: Tree geometry
        position: Crown centre (row, col)
        shape: Grid shape used for clipping; no clipping when None

    Returns:
        CanopyPatch whose cells outside the crown disc hold 0
    """
    drs, dcs, heights = crown_offsets(geometry)
    rows = drs + position[0]
    cols = dcs + position[1]
    if shape is not None:
        keep = (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
        rows, cols, heights = rows[keep], cols[keep], heights[keep]

    row0, col0 = int(rows.min()), int(cols.min())
    values = np.zeros((int(rows.max()) - row0 + 1, int(cols.max()) - col0 + 1))
    values[rows - row0, cols - col0] = heights
    return CanopyPatch(row0=row0, col0=col0, values=values)


def validate_placement(area: StudyArea, placement: TreePlacement) -> FeasibilityVerdict:
    """
    Check land-cover and non-overlap constraints.

    Trees may stand on paved, grass and bare-soil cells; crown centres must be
    at least one crown diameter apart.
    """
    height, width = area.shape
    codes = area.land_cover.values
    for index, (row, col) in enumerate(placement.positions):
        if not (0 <= row < height and 0 <= col < width):
            return FeasibilityVerdict(False, f"tree {index} at ({row}, {col}) is out of bounds", index)
        code = codes[row, col]
        if code == LandCoverClass.BUILDING:
            return FeasibilityVerdict(False, f"tree {index} at ({row}, {col}) stands on a building", index)
        if code == LandCoverClass.WATER:
            return FeasibilityVerdict(False, f"tree {index} at ({row}, {col}) stands on water", index)

    min_distance = placement.geometry.crown_diameter - 1e-9
    for (i, a), (j, b) in combinations(enumerate(placement.positions), 2):
        if math.hypot(a[0] - b[0], a[1] - b[1]) < min_distance:
            return FeasibilityVerdict(False, f"trees {i} and {j} have overlapping canopies", j)

    return FeasibilityVerdict(True)


def apply_placement(area: StudyArea, placement: TreePlacement) -> StudyArea:
    """
    Merge the placement's canopies into the vegetation DSM (cellwise max).

    Raises:
        InfeasiblePlacementError: if validate_placement rejects the placement
    """
    verdict = validate_placement(area, placement)
    if not verdict:
        raise InfeasiblePlacementError(verdict.reason)

    vegetation = np.array(area.dsm_vegetation.values)
    for position in placement.positions:
        patch = rasterize_tree(placement.geometry, position, area.shape)
        region = vegetation[patch.slices]
        np.maximum(region, patch.values, out=region)
    vegetation[area.building_mask] = 0.0
    return area.with_vegetation(vegetation)


def remove_placement(area: StudyArea, placement: TreePlacement) -> StudyArea:
    """
    Clear cells whose vegetation is dominated by the placement's canopies.

    Exact inverse of apply_placement on a background without vegetation
    under the crowns.
    """
    vegetation = np.array(area.dsm_vegetation.values)
    for position in placement.positions:
        patch = rasterize_tree(placement.geometry, position, area.shape)
        region = vegetation[patch.slices]
        covered = (patch.values > 0) & (region <= patch.values)
        region[covered] = 0.0
    return area.with_vegetation(vegetation)


# --- Walls ---

def derive_walls(dsm_ground_buildings: np.ndarray,
                 building_mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Derive wall height and aspect from building DSM edges.

    Returns:
        (wall_height, wall_aspect); aspect is the outward normal, north = 0, clockwise
    """
    dsm = np.asarray(dsm_ground_buildings, dtype=np.float64)
    padded = np.pad(dsm, 1, mode='edge')
    centre = padded[1:-1, 1:-1]
    drops = {
        'north': centre - padded[:-2, 1:-1],
        'south': centre - padded[2:, 1:-1],
        'west': centre - padded[1:-1, :-2],
        'east': centre - padded[1:-1, 2:],
    }
    drops = {key: np.where(building_mask, np.clip(value, 0.0, None), 0.0) for key, value in drops.items()}

    wall_height = np.maximum.reduce(list(drops.values()))
    drow = drops['south'] - drops['north']
    dcol = drops['east'] - drops['west']
    aspect = np.mod(np.degrees(np.arctan2(dcol, -drow)), 360.0)
    aspect = np.where((wall_height > 0) & (aspect < 360.0), aspect, 0.0)
    return wall_height, aspect


# --- Synthetic study areas ---

@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic study area."""
    width: int = 128
    height: int = 128
    building_density: float = 0.3
    vegetation_density: float = 0.1
    street_pattern: str = 'grid'
    water_strip: bool = False
    block_size: int = 24
    street_width: int = 6
    latitude: float = DEFAULT_LATITUDE
    longitude: float = DEFAULT_LONGITUDE
    base_elevation: float = 0.0


def _synth_blocks(spec: SynthSpec):
    street = spec.street_width if spec.street_pattern == 'grid' else 2
    for r0 in range(street, spec.height, spec.block_size):
        for c0 in range(street, spec.width, spec.block_size):
            r1 = min(r0 + spec.block_size - street, spec.height)
            c1 = min(c0 + spec.block_size - street, spec.width)
            if r1 - r0 >= 4 and c1 - c0 >= 4:
                yield r0, r1, c0, c1


def synth_study_area(seed: int, spec: SynthSpec = SynthSpec()) -> StudyArea:
    """
    Generate a deterministic synthetic study area.

    Blocks between streets become buildings (with probability building_density),
    grass, bare soil or open plazas. Existing trees are scattered until their
    canopy covers roughly vegetation_density of the area.

    Args:
        seed: Random seed
        spec: Layout parameters

    Returns:
        Validated StudyArea with derived walls
    """
    if spec.width < 32 or spec.height < 32:
        raise InputDataError(f"synthetic areas need at least 32x32 cells, got {spec.height}x{spec.width}")
    for name in ('building_density', 'vegetation_density'):
        value = getattr(spec, name)
        if not 0.0 <= value <= 1.0:
            raise InputDataError(f"{name} must lie in [0, 1], got {value}")
    if spec.street_pattern not in ('grid', 'none'):
        raise InputDataError(f"unknown street pattern: {spec.street_pattern}")

    rng = np.random.default_rng(seed)
    shape = (spec.height, spec.width)
    land_cover = np.full(shape, LandCoverClass.PAVED, dtype=np.int8)
    building_heights = np.zeros(shape)

    for r0, r1, c0, c1 in _synth_blocks(spec):
        if rng.random() < spec.building_density:
            inset = int(rng.integers(1, 3))
            height = float(np.round(rng.uniform(6.0, 24.0) * 2.0) / 2.0)
            land_cover[r0 + inset:r1 - inset, c0 + inset:c1 - inset] = LandCoverClass.BUILDING
            building_heights[r0 + inset:r1 - inset, c0 + inset:c1 - inset] = height
        else:
            draw = rng.random()
            if spec.vegetation_density > 0 and draw < 0.5:
                land_cover[r0:r1, c0:c1] = LandCoverClass.GRASS
            elif draw < 0.6:
                land_cover[r0:r1, c0:c1] = LandCoverClass.BARE_SOIL

    if spec.water_strip:
        land_cover[-4:, :] = LandCoverClass.WATER
        building_heights[-4:, :] = 0.0

    building_mask = land_cover == LandCoverClass.BUILDING
    vegetation = np.zeros(shape)
    target_canopy = spec.vegetation_density * spec.width * spec.height
    if target_canopy > 0:
        placed = []
        attempts = 0
        covered = 0
        while covered < target_canopy and attempts < 200 + 50 * spec.width:
            attempts += 1
            row, col = int(rng.integers(0, spec.height)), int(rng.integers(0, spec.width))
            geometry = TreeGeometry(height=float(np.round(rng.uniform(6.0, 15.0))),
                                    crown_diameter=float(rng.choice([5.0, 7.0, 9.0])))
            if building_mask[row, col] or land_cover[row, col] == LandCoverClass.WATER:
                continue
            if any(math.hypot(row - r, col - c) < (geometry.crown_diameter + d) / 2.0 for r, c, d in placed):
                continue
            patch = rasterize_tree(geometry, (row, col), shape)
            region = vegetation[patch.slices]
            np.maximum(region, patch.values, out=region)
            placed.append((row, col, geometry.crown_diameter))
            covered = int(np.count_nonzero(vegetation))
        vegetation[building_mask] = 0.0

    dem = np.full(shape, spec.base_elevation)
    dsm = dem + building_heights
    wall_height, wall_aspect = derive_walls(dsm, building_mask)

    def grid(values):
        return Grid(values=values)

    return StudyArea(dem=grid(dem),
                     dsm_ground_buildings=grid(dsm),
                     dsm_vegetation=grid(vegetation),
                     land_cover=grid(land_cover.astype(np.float64)),
                     wall_height=grid(wall_height),
                     wall_aspect=grid(wall_aspect),
                     latitude=spec.latitude,
                     longitude=spec.longitude)


def area_from_arrays(land_cover: np.ndarray, building_heights: Optional[np.ndarray] = None,
                     vegetation: Optional[np.ndarray] = None, dem: Optional[np.ndarray] = None,
                     latitude: float = DEFAULT_LATITUDE, longitude: float = DEFAULT_LONGITUDE) -> StudyArea:
    """Build a StudyArea from plain arrays (heights above ground); walls are derived."""
    land_cover = np.asarray(land_cover, dtype=np.float64)
    shape = land_cover.shape
    dem = np.zeros(shape) if dem is None else np.asarray(dem, dtype=np.float64)
    building_heights = np.zeros(shape) if building_heights is None else np.asarray(building_heights, dtype=np.float64)
    vegetation = np.zeros(shape) if vegetation is None else np.asarray(vegetation, dtype=np.float64)
    building_mask = land_cover == LandCoverClass.BUILDING
    dsm = dem + np.where(building_mask, building_heights, 0.0)
    wall_height, wall_aspect = derive_walls(dsm, building_mask)
    return StudyArea(dem=Grid(dem), dsm_ground_buildings=Grid(dsm), dsm_vegetation=Grid(vegetation),
                     land_cover=Grid(land_cover), wall_height=Grid(wall_height),
                     wall_aspect=Grid(wall_aspect), latitude=latitude, longitude=longitude)
