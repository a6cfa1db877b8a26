"""
Shadow Engine Module
====================
Ray-marched shadow casting and hemispheric sky view factors over the
building and vegetation surface models of a StudyArea.

Grid orientation: row 0 is the northern edge, columns grow eastward.
Azimuths are degrees clockwise from north. Rays start at the pedestrian
evaluation height and advance one metre horizontally per step.

Vegetation is a volume between the trunk top and the canopy top; a ray
that enters a crown volume counts one canopy hit and is attenuated by the
transmissivity for each hit.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from planting_errors import InputDataError
from study_area import (
    Cell,
    Grid,
    StudyArea,
    TreeGeometry,
    area_from_arrays,
    rasterize_tree,
    write_ascii_grid,
)

logger = logging.getLogger(__name__)

SVF_FILES = {
    'svf_total': 'svf_total.asc',
    'svf_buildings': 'svf_build.asc',
    'svf_vegetation': 'svf_veg.asc',
}
DEFAULT_TRANSMISSIVITY = 0.03


@dataclass(frozen=True)
class ShadowConfig:
    """Geometry settings shared by shadow casting and SVF."""
    evaluation_height: float = 1.1
    trunk_fraction: float = 0.25
    n_azimuth: int = 36
    n_elevation: int = 18
    max_tan: float = 1.0e4  # zenith clamp


DEFAULT_SHADOW_CONFIG = ShadowConfig()


@dataclass(frozen=True, eq=False)
class ShadowField:
    """Sun obstruction for one sun position; at night both fields are zero."""
    building_shadow: np.ndarray
    vegetation_shadow: np.ndarray
    canopy_hits: np.ndarray
    sun_elevation: float
    sun_azimuth: float


@dataclass(frozen=True, eq=False)
class SvfMaps:
    """Cosine-weighted visible-sky fractions."""
    svf_total: np.ndarray
    svf_buildings: np.ndarray
    svf_vegetation: np.ndarray

    def __post_init__(self):
        for name in SVF_FILES:
            values = np.clip(np.array(getattr(self, name), dtype=np.float64), 0.0, 1.0)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        bound = np.minimum(self.svf_buildings, self.svf_vegetation)
        if (self.svf_total > bound + 1e-9).any():
            raise InputDataError("svf_total must not exceed svf_buildings or svf_vegetation")


@dataclass(frozen=True)
class CellBox:
    """Half-open cell rectangle [row0, row1) x [col0, col1)."""
    row0: int
    row1: int
    col0: int
    col1: int

    @property
    def slices(self) -> Tuple[slice, slice]:
        return slice(self.row0, self.row1), slice(self.col0, self.col1)

    def union(self, other: 'CellBox') -> 'CellBox':
        return CellBox(min(self.row0, other.row0), max(self.row1, other.row1),
                       min(self.col0, other.col0), max(self.col1, other.col1))


@dataclass(frozen=True, eq=False)
class TreeStamp:
    """Sparse per-cell values of a lone tree, as offsets from its crown centre."""
    drs: np.ndarray
    dcs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ('drs', 'dcs', 'values'):
            getattr(self, name).setflags(write=False)

    @property
    def reach(self) -> int:
        if self.drs.size == 0:
            return 0
        return int(max(np.abs(self.drs).max(), np.abs(self.dcs).max()))

    def clipped(self, position: Cell, shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Absolute (rows, cols, values) of the stamp placed at position, inside the grid."""
        rows = self.drs + position[0]
        cols = self.dcs + position[1]
        keep = (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
        return rows[keep], cols[keep], self.values[keep]


# --- Ray marching primitives ---

def _direction(azimuth: float) -> Tuple[float, float]:
    """(d_row, d_col) of a unit horizontal step toward the given azimuth."""
    az = math.radians(azimuth)
    return -math.cos(az), math.sin(az)


def _offset(distance: int, d_row: float, d_col: float) -> Tuple[int, int]:
    return int(math.floor(distance * d_row + 0.5)), int(math.floor(distance * d_col + 0.5))


def _shifted(values: np.ndarray, d_row: int, d_col: int, fill: float) -> np.ndarray:
    """out[r, c] = values[r + d_row, c + d_col], fill outside the grid."""
    out = np.full_like(values, fill)
    height, width = values.shape
    if abs(d_row) >= height or abs(d_col) >= width:
        return out
    out[max(-d_row, 0):height + min(-d_row, 0), max(-d_col, 0):width + min(-d_col, 0)] = \
        values[max(d_row, 0):height + min(d_row, 0), max(d_col, 0):width + min(d_col, 0)]
    return out


def _tan(elevation: float, config: ShadowConfig) -> float:
    if elevation >= 90.0:
        return config.max_tan
    return min(math.tan(math.radians(elevation)), config.max_tan)


class _Surfaces:
    """Absolute heights used by the ray marcher."""

    def __init__(self, dem: np.ndarray, dsm: np.ndarray, vegetation: np.ndarray, config: ShadowConfig):
        has_vegetation = vegetation > 0
        self.z0 = dem + config.evaluation_height
        self.obstacle = np.asarray(dsm, dtype=np.float64)
        self.canopy_top = np.where(has_vegetation, dem + vegetation, -np.inf)
        self.trunk_top = np.where(has_vegetation, dem + config.trunk_fraction * vegetation, np.inf)
        self.shape = dem.shape
        self.diagonal = int(math.ceil(math.hypot(*dem.shape)))
        z_min = float(self.z0.min())
        self.obstacle_rise = float(self.obstacle.max()) - z_min
        self.canopy_rise = float(self.canopy_top.max()) - z_min if has_vegetation.any() else -np.inf

    @classmethod
    def from_area(cls, area: StudyArea, config: ShadowConfig,
                  vegetation: Optional[np.ndarray] = None) -> '_Surfaces':
        if vegetation is None:
            vegetation = area.dsm_vegetation.values
        return cls(area.dem.values, area.dsm_ground_buildings.values, vegetation, config)

    def reach(self, rise: float, tan_elevation: float) -> int:
        """Steps after which no surface with the given rise can block the ray."""
        if rise <= 0:
            return 0
        return min(self.diagonal, int(math.floor(rise / tan_elevation)) + 1)


def _building_horizon(surfaces: _Surfaces, azimuth: float, min_tan: float) -> np.ndarray:
    """
    Steepest obstruction (as tan of the elevation angle) seen from each cell toward azimuth.

    Cells whose own surface rises above the evaluation height see +inf.
    Obstructions flatter than min_tan are not resolved.
    """
    horizon = np.where(surfaces.obstacle > surfaces.z0, np.inf, -np.inf)
    max_steps = surfaces.reach(surfaces.obstacle_rise, min_tan)
    d_row, d_col = _direction(azimuth)
    previous = (0, 0)
    for step in range(1, max_steps + 1):
        offset = _offset(step, d_row, d_col)
        if abs(offset[0]) >= surfaces.shape[0] or abs(offset[1]) >= surfaces.shape[1]:
            break
        if offset == previous:
            continue
        previous = offset
        ahead = _shifted(surfaces.obstacle, offset[0], offset[1], -np.inf)
        np.maximum(horizon, (ahead - surfaces.z0) / step, out=horizon)
    return horizon


def _canopy_hits(surfaces: _Surfaces, azimuth: float, tans: Iterable[float]) -> np.ndarray:
    """Number of distinct crown volumes entered by the ray for each elevation tangent."""
    tans = list(tans)
    counts = np.zeros((len(tans),) + surfaces.shape, dtype=np.int16)
    if surfaces.canopy_rise == -np.inf:
        return counts

    z0 = surfaces.z0
    inside = []
    for j, t in enumerate(tans):
        # the first half cell of the ray runs through the cell itself
        entered = (surfaces.trunk_top < z0 + 0.5 * t) & (z0 < surfaces.canopy_top)
        counts[j] += entered
        inside.append(entered)

    limits = [surfaces.reach(surfaces.canopy_rise, t) for t in tans]
    d_row, d_col = _direction(azimuth)
    for step in range(1, max(limits) + 1):
        offset = _offset(step, d_row, d_col)
        if abs(offset[0]) >= surfaces.shape[0] or abs(offset[1]) >= surfaces.shape[1]:
            break
        top = _shifted(surfaces.canopy_top, offset[0], offset[1], -np.inf)
        trunk = _shifted(surfaces.trunk_top, offset[0], offset[1], np.inf)
        for j, t in enumerate(tans):
            if step > limits[j]:
                continue
            z = z0 + step * t
            now = (trunk < z) & (z <= top)
            counts[j] += now & ~inside[j]
            inside[j] = now
    return counts


# --- Public operations ---

def sun_obstruction(area: StudyArea, sun_elevation: float, sun_azimuth: float,
                    config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                    vegetation: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Building sunlit mask and canopy-hit counts for one daytime sun position.

    Returns:
        (sunlit, hits): boolean array, int16 array
    """
    surfaces = _Surfaces.from_area(area, config, vegetation)
    t = _tan(sun_elevation, config)
    sunlit = _building_horizon(surfaces, sun_azimuth, t) <= t
    hits = _canopy_hits(surfaces, sun_azimuth, [t])[0]
    return sunlit, hits


def cast_shadows(area: StudyArea, sun_elevation: float, sun_azimuth: float,
                 transmissivity: float = DEFAULT_TRANSMISSIVITY,
                 config: ShadowConfig = DEFAULT_SHADOW_CONFIG) -> ShadowField:
    """
    Cast building and vegetation shadows for one sun position.

    Args:
        area: Study area
        sun_elevation: Degrees above the horizon
        sun_azimuth: Degrees clockwise from north
        transmissivity: Fraction of the beam passing one canopy, in (0, 1]
        config: Ray geometry settings

    Returns:
        ShadowField; all-zero when the sun is at or below the horizon
    """
    if not 0.0 < transmissivity <= 1.0:
        raise InputDataError(f"transmissivity must lie in (0, 1], got {transmissivity}")

    if sun_elevation <= 0:
        zeros = np.zeros(area.shape)
        return ShadowField(zeros, zeros.copy(), np.zeros(area.shape, dtype=np.int16),
                           sun_elevation, sun_azimuth)

    sunlit, hits = sun_obstruction(area, sun_elevation, sun_azimuth, config)
    return ShadowField(building_shadow=sunlit.astype(np.float64),
                       vegetation_shadow=transmissivity ** hits.astype(np.float64),
                       canopy_hits=hits,
                       sun_elevation=sun_elevation,
                       sun_azimuth=sun_azimuth)


def svf_directions(config: ShadowConfig = DEFAULT_SHADOW_CONFIG) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Azimuths, elevation ring centres and cosine weights of the SVF sampling."""
    azimuths = (np.arange(config.n_azimuth) + 0.5) * 360.0 / config.n_azimuth
    elevations = (np.arange(config.n_elevation) + 0.5) * 90.0 / config.n_elevation
    radians = np.radians(elevations)
    weights = np.sin(radians) * np.cos(radians)
    return azimuths, elevations, weights


def compute_svf(area: StudyArea, transmissivity: float = DEFAULT_TRANSMISSIVITY,
                config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                progress: bool = False) -> SvfMaps:
    """
    Hemispheric sky view factors.

    Each of n_azimuth x n_elevation directions is open when no building or
    terrain blocks it; vegetation attenuates it by transmissivity per canopy
    hit. Directions are weighted by sin(e) cos(e).

    Args:
        area: Study area (its current vegetation is used)
        transmissivity: Canopy transmissivity
        config: Sampling resolution and ray geometry
        progress: Show a progress bar over azimuths

    Returns:
        SvfMaps
    """
    surfaces = _Surfaces.from_area(area, config)
    azimuths, elevations, weights = svf_directions(config)
    tans = [_tan(e, config) for e in elevations]

    open_buildings = np.zeros(area.shape)
    open_vegetation = np.zeros(area.shape)
    open_total = np.zeros(area.shape)
    for azimuth in tqdm(azimuths, desc="SVF azimuths", disable=not progress, leave=False):
        horizon = _building_horizon(surfaces, azimuth, tans[0])
        hits = _canopy_hits(surfaces, azimuth, tans)
        for j, t in enumerate(tans):
            is_open = horizon <= t
            transmitted = transmissivity ** hits[j].astype(np.float64)
            open_buildings += weights[j] * is_open
            open_vegetation += weights[j] * transmitted
            open_total += weights[j] * is_open * transmitted

    total_weight = len(azimuths) * weights.sum()
    return SvfMaps(svf_total=open_total / total_weight,
                   svf_buildings=open_buildings / total_weight,
                   svf_vegetation=open_vegetation / total_weight)


def refresh_svf(area: StudyArea, transmissivity: float = DEFAULT_TRANSMISSIVITY,
                config: ShadowConfig = DEFAULT_SHADOW_CONFIG) -> StudyArea:
    """Return the area with SVF maps matching its current vegetation."""
    if area.svf is not None and not area.svf_stale:
        return area
    return area.with_svf(compute_svf(area, transmissivity, config))


def write_svf(svf: SvfMaps, directory, template: Optional[Grid] = None) -> List[Path]:
    """Write the three SVF maps as ESRI ASCII grids."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, filename in SVF_FILES.items():
        values = getattr(svf, name)
        grid = template.with_values(values) if template is not None else Grid(values)
        write_ascii_grid(grid, directory / filename, fmt='%.6f')
        written.append(directory / filename)
    return written


def influence_radius(geometry: TreeGeometry, min_sun_elevation: float) -> float:
    """Distance beyond which a tree cannot change shadows for suns above min_sun_elevation."""
    if not min_sun_elevation > 0:
        raise ValueError(f"min_sun_elevation must be positive, got {min_sun_elevation}")
    if min_sun_elevation >= 90.0:
        return geometry.crown_radius
    return geometry.crown_radius + geometry.height / math.tan(math.radians(min_sun_elevation))


def influence_region(position: Cell, geometry: TreeGeometry, min_sun_elevation: float,
                     shape: Optional[Tuple[int, int]] = None) -> CellBox:
    """
    Bounding box of the cells a tree at position can affect.

    Args:
        position: Crown centre (row, col)
        geometry: Tree geometry
        min_sun_elevation: Lowest daytime sun elevation considered, degrees
        shape: Grid shape for clipping

    Returns:
        CellBox with a square half-width of ceil(influence_radius)
    """
    reach = int(math.ceil(influence_radius(geometry, min_sun_elevation) - 1e-9))
    row, col = position
    box = CellBox(row - reach, row + reach + 1, col - reach, col + reach + 1)
    if shape is None:
        return box
    return CellBox(max(box.row0, 0), min(box.row1, shape[0]), max(box.col0, 0), min(box.col1, shape[1]))


@lru_cache(maxsize=1024)
def tree_shadow_stamp(geometry: TreeGeometry, sun_elevation: float, sun_azimuth: float,
                      config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                      max_distance: Optional[int] = None) -> TreeStamp:
    """
    Canopy-hit counts cast by a lone tree on flat open ground.

    The patch spans the tree and its shadow path, so the result does not
    depend on the surrounding grid.
    """
    t = _tan(sun_elevation, config)
    length = int(math.ceil(max(0.0, geometry.height - config.evaluation_height) / t)) + 1
    if max_distance is not None:
        length = min(length, max_distance)
    d_row, d_col = _direction(sun_azimuth)
    margin = int(math.ceil(geometry.crown_radius)) + 2
    tail_row, tail_col = -length * d_row, -length * d_col
    row_min = int(math.floor(min(0.0, tail_row))) - margin
    row_max = int(math.ceil(max(0.0, tail_row))) + margin
    col_min = int(math.floor(min(0.0, tail_col))) - margin
    col_max = int(math.ceil(max(0.0, tail_col))) + margin

    shape = (row_max - row_min + 1, col_max - col_min + 1)
    centre = (-row_min, -col_min)
    vegetation = np.zeros(shape)
    patch = rasterize_tree(geometry, centre, shape)
    vegetation[patch.slices] = patch.values
    ground = np.zeros(shape)

    surfaces = _Surfaces(ground, ground, vegetation, config)
    hits = _canopy_hits(surfaces, sun_azimuth, [t])[0]
    rows, cols = np.nonzero(hits)
    return TreeStamp(drs=rows - centre[0], dcs=cols - centre[1], values=hits[rows, cols].astype(np.int16))


@lru_cache(maxsize=64)
def tree_svf_stamp(geometry: TreeGeometry, radius: int,
                   transmissivity: float = DEFAULT_TRANSMISSIVITY,
                   config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                   min_loss: float = 1e-3) -> TreeStamp:
    """
    Multiplicative sky view factor of a lone tree on flat open ground.

    Values are svf_vegetation around the tree; cells farther than radius
    (Chebyshev) or losing less than min_loss of their sky are dropped.
    """
    size = 2 * radius + 1
    vegetation = np.zeros((size, size))
    patch = rasterize_tree(geometry, (radius, radius), (size, size))
    vegetation[patch.slices] = patch.values
    flat = area_from_arrays(np.zeros((size, size)), vegetation=vegetation)

    factor = compute_svf(flat, transmissivity, config).svf_vegetation
    rows, cols = np.nonzero(1.0 - factor >= min_loss)
    return TreeStamp(drs=rows - radius, dcs=cols - radius, values=factor[rows, cols])
