"""
Tmrt Engine Module
==================
Point-wise mean radiant temperature and the aggregated evaluators.

Two evaluators are provided:

- evaluate_reference: casts shadows for every record and averages the
  point-wise Tmrt grids. Slow, used as the gold standard.
- evaluate_fast: groups daytime records into sun-position bins, keeps one
  building shadow mask and one canopy-hit raster per bin, and reads summed
  Tmrt from per-bin lookup tables indexed by shadow state and sky view
  factor. Added trees enter through lone-tree shadow and SVF stamps, so a
  tree move only touches the cells its stamps cover.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from meteo_sequencer import MeteoRecord, TimePeriod
from planting_errors import InfeasiblePlacementError, InputDataError, StaleSvfError
from shadow_engine import (
    DEFAULT_SHADOW_CONFIG,
    CellBox,
    ShadowConfig,
    ShadowField,
    SvfMaps,
    cast_shadows,
    influence_radius,
    refresh_svf,
    sun_obstruction,
    tree_shadow_stamp,
    tree_svf_stamp,
)
from study_area import (
    Cell,
    Grid,
    LandCoverClass,
    StudyArea,
    TreeGeometry,
    TreePlacement,
    apply_placement,
    validate_placement,
    valid_cell_mask,
)

logger = logging.getLogger(__name__)

KELVIN = 273.15
SVF_KNOTS = 1025
MAX_CANOPY_HITS = 6
SVF_STAMP_RADIUS = 64
REFERENCE_CHUNK = 16

# six-direction weights for a standing person: up/down, left/right, front/back
WEIGHT_VERTICAL = 0.08
WEIGHT_LATERAL = 0.23 + 0.35
WEIGHT_NORM = 2.0 * (0.08 + 0.23 + 0.35)


@dataclass(frozen=True)
class RadiationParams:
    """Surface and body radiation properties."""
    albedo_ground: float = 0.15
    albedo_walls: float = 0.20
    emissivity_ground: float = 0.95
    emissivity_walls: float = 0.90
    transmissivity: float = 0.03
    absorption_shortwave: float = 0.70
    emissivity_person: float = 0.97
    diffuse_fraction: float = 0.30
    stefan_boltzmann: float = 5.670e-8
    beam_sin_floor: float = 0.035
    surface_heating: float = 2.0  # K per kW m-2 of K_down

    _FRACTIONS = ('albedo_ground', 'albedo_walls', 'emissivity_ground', 'emissivity_walls',
                  'transmissivity', 'absorption_shortwave', 'emissivity_person', 'diffuse_fraction')

    def __post_init__(self):
        for name in self._FRACTIONS:
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise InputDataError(f"{name} must lie in (0, 1], got {value}")
        if not math.isclose(self.stefan_boltzmann, 5.670e-8):
            raise InputDataError("stefan_boltzmann is fixed at 5.670e-8")

    def with_overrides(self, overrides: Dict[str, str]) -> 'RadiationParams':
        """Apply key=value overrides (values as strings or numbers)."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise InputDataError(f"unknown radiation parameter(s): {', '.join(unknown)}")
        try:
            return replace(self, **{key: float(value) for key, value in overrides.items()})
        except ValueError as e:
            raise InputDataError(str(e))


@dataclass(frozen=True)
class DirectionalFluxes:
    """Short- and longwave fluxes (W m-2) received from six directions; lateral is the mean of four."""
    K_up: np.ndarray
    K_down: np.ndarray
    K_lateral: np.ndarray
    L_up: np.ndarray
    L_down: np.ndarray
    L_lateral: np.ndarray


@dataclass(frozen=True)
class BinSpec:
    """Sun-position binning resolution."""
    n_azimuth: int = 36
    n_elevation: int = 9

    def __post_init__(self):
        if self.n_azimuth < 1 or self.n_elevation < 1:
            raise InputDataError(f"bin counts must be >= 1, got {self.n_azimuth}x{self.n_elevation}")

    def index(self, elevation: float, azimuth: float) -> Tuple[int, int]:
        a = min(int(azimuth // (360.0 / self.n_azimuth)), self.n_azimuth - 1)
        e = min(int(elevation // (90.0 / self.n_elevation)), self.n_elevation - 1)
        return a, e

    @classmethod
    def parse(cls, text: str) -> 'BinSpec':
        """Parse 'AxE', e.g. '36x9'."""
        try:
            a, e = text.lower().split('x')
            n_azimuth, n_elevation = int(a), int(e)
        except ValueError:
            raise InputDataError(f"malformed bin spec '{text}', expected AxE")
        return cls(n_azimuth, n_elevation)


# --- Radiation closure ---

def vapour_pressure(air_temperature, relative_humidity):
    """Actual vapour pressure in hPa (Magnus form over water)."""
    saturation = 6.112 * np.exp(17.62 * air_temperature / (243.12 + air_temperature))
    return relative_humidity / 100.0 * saturation


def sky_emissivity(air_temperature, relative_humidity):
    """Clear-sky emissivity from vapour pressure and air temperature (Brutsaert type)."""
    ta_k = air_temperature + KELVIN
    emissivity = 1.24 * (vapour_pressure(air_temperature, relative_humidity) / ta_k) ** (1.0 / 7.0)
    return np.minimum(emissivity, 1.0)


def flux_components(record: MeteoRecord, sun_factor, svf, params: RadiationParams) -> DirectionalFluxes:
    """
    Directional fluxes for one record, broadcasting over sun_factor and svf.

    Args:
        record: Meteorological record
        sun_factor: building_shadow * vegetation_shadow (0 = fully shaded)
        svf: Total sky view factor
        params: Radiation properties

    Returns:
        DirectionalFluxes with arrays of the broadcast shape
    """
    sun_factor = np.asarray(sun_factor, dtype=np.float64)
    svf = np.asarray(svf, dtype=np.float64)
    if record.sun_elevation > 0:
        elevation = math.radians(record.sun_elevation)
        diffuse = params.diffuse_fraction * record.shortwave_global
        beam_horizontal = record.shortwave_global - diffuse
        beam_normal = beam_horizontal / max(math.sin(elevation), params.beam_sin_floor)
        cos_elevation = math.cos(elevation)
    else:
        diffuse = beam_horizontal = beam_normal = cos_elevation = 0.0

    k_down = diffuse * svf + beam_horizontal * sun_factor
    k_up = params.albedo_ground * k_down
    k_lateral = 0.5 * beam_normal * cos_elevation * sun_factor + 0.5 * diffuse * (1.0 - svf) * params.albedo_walls

    sigma = params.stefan_boltzmann
    ta_k = record.air_temperature + KELVIN
    l_sky = sky_emissivity(record.air_temperature, record.relative_humidity) * sigma * ta_k ** 4
    t_surface = ta_k + params.surface_heating * k_down / 1000.0
    l_ground = params.emissivity_ground * sigma * t_surface ** 4
    l_down = svf * l_sky + (1.0 - svf) * l_ground
    l_lateral = 0.5 * (l_down + l_ground)

    return DirectionalFluxes(K_up=k_up, K_down=k_down, K_lateral=k_lateral,
                             L_up=l_ground, L_down=l_down, L_lateral=l_lateral)


def directional_fluxes(cell: Cell, record: MeteoRecord, shadow: ShadowField, svf: SvfMaps,
                       params: RadiationParams = RadiationParams()) -> DirectionalFluxes:
    """Directional fluxes at one cell."""
    row, col = cell
    sun_factor = shadow.building_shadow[row, col] * shadow.vegetation_shadow[row, col]
    fluxes = flux_components(record, sun_factor, svf.svf_total[row, col], params)
    return DirectionalFluxes(**{f.name: float(getattr(fluxes, f.name)) for f in fields(fluxes)})


def radiant_temperature(shortwave, longwave, params: RadiationParams = RadiationParams()):
    """Radiant temperature (K) of one direction from the fluxes it receives."""
    return ((params.absorption_shortwave * shortwave + params.emissivity_person * longwave)
            / (params.emissivity_person * params.stefan_boltzmann)) ** 0.25


def combine_directional(t_up, t_down, t_lateral):
    """Combine directional radiant temperatures (K) into Tmrt (K) in fourth-power form."""
    fourth = (WEIGHT_VERTICAL * (t_up ** 4 + t_down ** 4) + 2.0 * WEIGHT_LATERAL * t_lateral ** 4) / WEIGHT_NORM
    return fourth ** 0.25


def tmrt_from_fluxes(fluxes: DirectionalFluxes, params: RadiationParams = RadiationParams()):
    """Tmrt in °C."""
    # the upward-facing direction receives the downward fluxes and vice versa
    t_up = radiant_temperature(fluxes.K_down, fluxes.L_down, params)
    t_down = radiant_temperature(fluxes.K_up, fluxes.L_up, params)
    t_lateral = radiant_temperature(fluxes.K_lateral, fluxes.L_lateral, params)
    return combine_directional(t_up, t_down, t_lateral) - KELVIN


def _record_tmrt(record: MeteoRecord, sun_factor, svf, params: RadiationParams):
    return tmrt_from_fluxes(flux_components(record, sun_factor, svf, params), params)


def tmrt_pointwise(area: StudyArea, record: MeteoRecord, params: RadiationParams = RadiationParams(),
                   config: ShadowConfig = DEFAULT_SHADOW_CONFIG) -> Grid:
    """
    Tmrt (°C) of every cell for one record.

    Raises:
        StaleSvfError: if the area's SVF maps are missing or out of date
    """
    if area.svf is None or area.svf_stale:
        raise StaleSvfError("SVF maps do not match the current vegetation; call refresh_svf first")
    shadow = cast_shadows(area, record.sun_elevation, record.sun_azimuth, params.transmissivity, config)
    sun_factor = shadow.building_shadow * shadow.vegetation_shadow
    return area.dem.with_values(_record_tmrt(record, sun_factor, area.svf.svf_total, params))


# --- Reference evaluation ---

@dataclass(frozen=True, eq=False)
class ReferenceEvaluation:
    """Mean Tmrt grid over a period plus per-record diagnostics."""
    aggregated: np.ndarray
    record_means: np.ndarray
    timestamps: Tuple
    series: Optional[np.ndarray] = None
    heat_hours: Optional[int] = None

    def objective(self, valid: np.ndarray) -> float:
        return float(self.aggregated[valid].mean())


def evaluate_reference(area: StudyArea, period: TimePeriod, params: RadiationParams = RadiationParams(),
                       config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                       placement: Optional[TreePlacement] = None,
                       keep_series: bool = False, threads: int = 1,
                       progress: bool = False,
                       heat_threshold: Optional[float] = None) -> ReferenceEvaluation:
    """
    Mean point-wise Tmrt over all records, recasting shadows per record.

    Args:
        area: Study area
        period: Records to average over
        params: Radiation properties
        config: Ray geometry
        placement: Trees to add before evaluating
        keep_series: Keep every per-record grid (n_records x H x W)
        threads: Worker threads for per-record evaluation; reduction order is fixed
        progress: Show a progress bar
        heat_threshold: Count valid cell-hours above this Tmrt (°C)

    Returns:
        ReferenceEvaluation
    """
    if placement is not None and placement.k:
        area = apply_placement(area, placement)
    area = refresh_svf(area, params.transmissivity, config)
    valid = valid_cell_mask(area)

    def evaluate(record):
        return tmrt_pointwise(area, record, params, config).values

    workers = max(1, threads)
    chunk = REFERENCE_CHUNK * workers
    total = np.zeros(area.shape)
    means = []
    series = [] if keep_series else None
    hot = 0
    bar = tqdm(total=len(period), desc="Reference Tmrt", disable=not progress, leave=False)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(period), chunk):
            for grid in pool.map(evaluate, period.records[start:start + chunk]):
                total += grid
                means.append(float(grid[valid].mean()) if valid.any() else float('nan'))
                if keep_series:
                    series.append(grid)
                if heat_threshold is not None:
                    hot += int(np.count_nonzero(grid[valid] > heat_threshold))
                bar.update()
    bar.close()

    return ReferenceEvaluation(
        aggregated=total / len(period),
        record_means=np.array(means),
        timestamps=tuple(r.timestamp for r in period.records),
        series=np.stack(series) if keep_series else None,
        heat_hours=hot if heat_threshold is not None else None,
    )


# --- Sun-binned context ---

@dataclass(frozen=True, eq=False)
class SunBin:
    """One occupied sun-position bin."""
    azimuth_index: int
    elevation_index: int
    elevation: float
    azimuth: float
    beam_sum: float
    record_count: int


@dataclass(frozen=True, eq=False)
class EvalContext:
    """Precomputed, read-only state for fast aggregated evaluation."""
    area: StudyArea
    period: TimePeriod
    params: RadiationParams
    bin_spec: BinSpec
    geometry: TreeGeometry
    config: ShadowConfig
    bins: Tuple[SunBin, ...]
    beam_table: np.ndarray
    count_table: np.ndarray
    sunlit: np.ndarray
    base_hits: np.ndarray
    stamp_bins: np.ndarray
    stamp_drs: np.ndarray
    stamp_dcs: np.ndarray
    stamp_values: np.ndarray
    svf_base: np.ndarray
    svf_dense: np.ndarray
    svf_radius: int
    day_tables: np.ndarray
    night_table: np.ndarray
    valid: np.ndarray
    planting_allowed: np.ndarray
    min_sun_elevation: float
    influence_reach: int
    aggregation: str = 'mean'
    baseline: Optional[np.ndarray] = None
    baseline_objective: float = float('nan')
    baseline_summed: Optional[np.ndarray] = None
    baseline_total: float = 0.0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.area.shape

    @property
    def n_records(self) -> int:
        return len(self.period)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def static_shadow_cache(self) -> np.ndarray:
        """Per-bin building sunlit masks, shape (n_bins, H, W)."""
        return self.sunlit.reshape((len(self.bins),) + self.shape)

    def influence_region(self, position: Cell) -> CellBox:
        """Cells whose aggregated Tmrt can change when a tree stands at position."""
        row, col = position
        r = self.influence_reach
        return CellBox(max(row - r, 0), min(row + r + 1, self.shape[0]),
                       max(col - r, 0), min(col + r + 1, self.shape[1]))

    def new_state(self, positions: Sequence[Cell] = ()) -> 'PlacementState':
        return PlacementState(self, positions)


def _bin_records(period: TimePeriod, bin_spec: BinSpec):
    groups: Dict[Tuple[int, int], List[MeteoRecord]] = {}
    night = []
    for record in period.records:
        if record.sun_elevation > 0:
            groups.setdefault(bin_spec.index(record.sun_elevation, record.sun_azimuth), []).append(record)
        else:
            night.append(record)
    return groups, night


def _beam_horizontal(record: MeteoRecord, params: RadiationParams) -> float:
    if record.sun_elevation <= 0:
        return 0.0
    return record.shortwave_global * (1.0 - params.diffuse_fraction)


def _representative_angle(records: Sequence[MeteoRecord], params: RadiationParams) -> Tuple[float, float]:
    weights = np.array([_beam_horizontal(r, params) for r in records])
    if weights.sum() <= 0:
        weights = np.ones(len(records))
    elevation = float(np.average([r.sun_elevation for r in records], weights=weights))
    azimuth = float(np.average([r.sun_azimuth for r in records], weights=weights))
    return elevation, azimuth


def _state_factors(params: RadiationParams) -> np.ndarray:
    """Beam factor per shadow state: 0..MAX_CANOPY_HITS canopy hits, then building shadow."""
    hits = np.arange(MAX_CANOPY_HITS + 1, dtype=np.float64)
    return np.append(params.transmissivity ** hits, 0.0)


BUILDING_STATE = MAX_CANOPY_HITS + 1


def build_context(area: StudyArea, period: TimePeriod, params: RadiationParams = RadiationParams(),
                  bin_spec: BinSpec = BinSpec(), geometry: TreeGeometry = TreeGeometry(),
                  config: ShadowConfig = DEFAULT_SHADOW_CONFIG, aggregation: str = 'mean',
                  progress: bool = False) -> EvalContext:
    """
    Precompute sun bins, static shadows, tree stamps and Tmrt tables.

    Args:
        area: Study area without the trees to optimize
        period: Records to aggregate over
        params: Radiation properties
        bin_spec: Sun-bin resolution
        geometry: Geometry of the trees to place
        config: Ray geometry
        aggregation: Aggregation over records; only 'mean' is implemented
        progress: Show progress bars

    Returns:
        EvalContext with baseline grid and objective filled in
    """
    if aggregation != 'mean':
        raise ValueError(f"unsupported aggregation: {aggregation}")
    if len(period) == 0:
        raise InputDataError("empty period")

    area = refresh_svf(area, params.transmissivity, config)
    height, width = area.shape
    n_cells = height * width
    diagonal = int(math.ceil(math.hypot(height, width)))

    groups, night = _bin_records(period, bin_spec)
    keys = sorted(groups)
    beam_table = np.zeros((bin_spec.n_azimuth, bin_spec.n_elevation))
    count_table = np.zeros((bin_spec.n_azimuth, bin_spec.n_elevation), dtype=np.int64)

    knots = np.linspace(0.0, 1.0, SVF_KNOTS)
    state_factors = _state_factors(params)[:, None]
    bins = []
    sunlit = np.zeros((len(keys), n_cells), dtype=bool)
    base_hits = np.zeros((len(keys), n_cells), dtype=np.int16)
    day_tables = np.zeros((len(keys), len(state_factors), SVF_KNOTS))
    stamp_parts = []

    for b, key in enumerate(tqdm(keys, desc="Sun bins", disable=not progress, leave=False)):
        records = groups[key]
        elevation, azimuth = _representative_angle(records, params)
        beam = math.fsum(_beam_horizontal(r, params) for r in records)
        beam_table[key] = beam
        count_table[key] = len(records)
        bins.append(SunBin(key[0], key[1], elevation, azimuth, beam, len(records)))

        lit, hits = sun_obstruction(area, elevation, azimuth, config)
        sunlit[b] = lit.ravel()
        base_hits[b] = hits.ravel()

        stamp = tree_shadow_stamp(geometry, elevation, azimuth, config, max_distance=diagonal)
        stamp_parts.append((np.full(stamp.drs.size, b), stamp.drs, stamp.dcs, stamp.values))

        for record in records:
            day_tables[b] += _record_tmrt(record, state_factors, knots[None, :], params)

    night_table = np.zeros(SVF_KNOTS)
    for record in night:
        night_table += _record_tmrt(record, 0.0, knots, params)

    if stamp_parts:
        stamp_bins, stamp_drs, stamp_dcs, stamp_values = (np.concatenate(p) for p in zip(*stamp_parts))
    else:
        stamp_bins = stamp_drs = stamp_dcs = np.zeros(0, dtype=np.int64)
        stamp_values = np.zeros(0, dtype=np.int16)
    stamp_reach = int(max(np.abs(stamp_drs).max(initial=0), np.abs(stamp_dcs).max(initial=0)))

    min_elevation = min((r.sun_elevation for r in period.records if r.sun_elevation > 0), default=90.0)
    shadow_reach = int(math.ceil(influence_radius(geometry, min_elevation) - 1e-9))
    # sky loss of a lone tree fades with distance, not with sun elevation
    svf_radius = max(1, min(SVF_STAMP_RADIUS, max(height, width)))
    svf_stamp = tree_svf_stamp(geometry, svf_radius, params.transmissivity, config)
    svf_dense = np.ones((2 * svf_radius + 1, 2 * svf_radius + 1))
    svf_dense[svf_stamp.drs + svf_radius, svf_stamp.dcs + svf_radius] = svf_stamp.values

    land_cover = area.land_cover.values
    planting_allowed = ~((land_cover == LandCoverClass.BUILDING) | (land_cover == LandCoverClass.WATER))

    ctx = EvalContext(
        area=area, period=period, params=params, bin_spec=bin_spec, geometry=geometry, config=config,
        bins=tuple(bins), beam_table=beam_table, count_table=count_table,
        sunlit=sunlit, base_hits=base_hits,
        stamp_bins=stamp_bins.astype(np.int64), stamp_drs=stamp_drs.astype(np.int64),
        stamp_dcs=stamp_dcs.astype(np.int64), stamp_values=stamp_values.astype(np.int16),
        svf_base=area.svf.svf_total.ravel().copy(), svf_dense=svf_dense, svf_radius=svf_radius,
        day_tables=day_tables, night_table=night_table,
        valid=valid_cell_mask(area).ravel(), planting_allowed=planting_allowed,
        min_sun_elevation=min_elevation,
        influence_reach=max(shadow_reach, svf_stamp.reach, stamp_reach),
        aggregation=aggregation,
    )
    state = PlacementState(ctx)
    ctx = replace(ctx, baseline=state.grid(), baseline_objective=state.objective,
                  baseline_summed=state.summed.copy(), baseline_total=state.total)
    ctx.baseline_summed.setflags(write=False)
    logger.info("built context: %d records, %d occupied sun bins, %d night records, baseline %.4f °C",
                len(period), len(bins), len(night), ctx.baseline_objective)
    return ctx


# --- Incremental placement state ---

class PlacementState:
    """
    Private scratch state of one placement on an EvalContext.

    Holds per-bin canopy-hit counts, the SVF multiplier of the planted trees
    and the summed Tmrt grid. Moves and additions recompute only the cells
    covered by the affected stamps.
    """

    def __init__(self, ctx: EvalContext, positions: Sequence[Cell] = ()):
        self.ctx = ctx
        self.positions: List[Cell] = [(int(r), int(c)) for r, c in positions]
        self.hits = ctx.base_hits.copy()
        n_cells = ctx.shape[0] * ctx.shape[1]
        self.factor = np.ones(n_cells)
        for position in self.positions:
            self._shift_hits(position, 1)
        if ctx.baseline_summed is None:
            self.summed = np.zeros(n_cells)
            self.total = 0.0
            self._refresh(np.arange(n_cells))
        else:
            # outside the stamps of the planted trees every cell keeps its baseline value
            self.summed = ctx.baseline_summed.copy()
            self.total = ctx.baseline_total
            self._refresh(self._changed_cells(*self.positions))

    # -- queries --

    @property
    def objective(self) -> float:
        """Mean aggregated Tmrt over valid cells (°C)."""
        if self.ctx.n_valid == 0:
            return float('nan')
        return self.total / (self.ctx.n_valid * self.ctx.n_records)

    def grid(self) -> np.ndarray:
        """Aggregated Tmrt grid (°C)."""
        return (self.summed / self.ctx.n_records).reshape(self.ctx.shape)

    def placement(self) -> TreePlacement:
        return TreePlacement(tuple(self.positions), self.ctx.geometry)

    def can_place(self, position: Cell, ignore: Optional[int] = None) -> bool:
        """Land-cover and non-overlap check of one position against the other trees."""
        row, col = position
        height, width = self.ctx.shape
        if not (0 <= row < height and 0 <= col < width) or not self.ctx.planting_allowed[row, col]:
            return False
        limit = self.ctx.geometry.crown_diameter - 1e-9
        for index, (r, c) in enumerate(self.positions):
            if index != ignore and math.hypot(r - row, c - col) < limit:
                return False
        return True

    # -- internals --

    def _stamp_cells(self, position: Cell):
        ctx = self.ctx
        height, width = ctx.shape
        rows = ctx.stamp_drs + position[0]
        cols = ctx.stamp_dcs + position[1]
        keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        return ctx.stamp_bins[keep], rows[keep] * width + cols[keep], ctx.stamp_values[keep]

    def _shift_hits(self, position: Cell, sign: int):
        bins, flat, values = self._stamp_cells(position)
        if sign > 0:
            self.hits[bins, flat] += values
        else:
            self.hits[bins, flat] -= values

    def _svf_cells(self, position: Cell) -> np.ndarray:
        height, width = self.ctx.shape
        radius = self.ctx.svf_radius
        r0, r1 = max(position[0] - radius, 0), min(position[0] + radius + 1, height)
        c0, c1 = max(position[1] - radius, 0), min(position[1] + radius + 1, width)
        window = self.ctx.svf_dense[r0 - position[0] + radius:r1 - position[0] + radius,
                                    c0 - position[1] + radius:c1 - position[1] + radius]
        rows, cols = np.nonzero(window < 1.0)
        return (rows + r0) * width + (cols + c0)

    def _changed_cells(self, *positions: Cell) -> np.ndarray:
        parts = []
        for position in positions:
            parts.append(self._stamp_cells(position)[1])
            parts.append(self._svf_cells(position))
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    def _aggregate(self, cells: np.ndarray) -> np.ndarray:
        ctx = self.ctx
        svf = ctx.svf_base[cells] * self.factor[cells]
        position = svf * (SVF_KNOTS - 1)
        lower = np.minimum(np.floor(position).astype(np.int64), SVF_KNOTS - 2)
        weight = position - lower
        upper = lower + 1

        total = ctx.night_table[lower] + (ctx.night_table[upper] - ctx.night_table[lower]) * weight
        for b in range(len(ctx.bins)):
            state = np.where(ctx.sunlit[b, cells],
                             np.minimum(self.hits[b, cells], MAX_CANOPY_HITS), BUILDING_STATE)
            table = ctx.day_tables[b]
            low = table[state, lower]
            total += low + (table[state, upper] - low) * weight
        return total

    def _refresh(self, cells: np.ndarray):
        if cells.size == 0:
            return
        ctx = self.ctx
        width = ctx.shape[1]
        radius = ctx.svf_radius
        rows, cols = np.divmod(cells, width)
        factor = np.ones(cells.size)
        for r, c in self.positions:
            near = (np.abs(rows - r) <= radius) & (np.abs(cols - c) <= radius)
            if near.any():
                factor[near] *= ctx.svf_dense[rows[near] - r + radius, cols[near] - c + radius]
        self.factor[cells] = factor

        updated = self._aggregate(cells)
        valid = ctx.valid[cells]
        self.total += float((updated[valid] - self.summed[cells][valid]).sum())
        self.summed[cells] = updated

    def _snapshot(self, cells: np.ndarray):
        return self.summed[cells].copy(), self.factor[cells].copy(), self.total

    def _restore(self, cells: np.ndarray, snapshot):
        self.summed[cells], self.factor[cells], self.total = snapshot

    # -- updates --

    def move(self, tree_index: int, new_position: Cell) -> float:
        """Move one tree and return the new objective."""
        new_position = (int(new_position[0]), int(new_position[1]))
        old = self.positions[tree_index]
        if new_position == old:
            return self.objective
        cells = self._changed_cells(old, new_position)
        self._shift_hits(old, -1)
        self.positions[tree_index] = new_position
        self._shift_hits(new_position, 1)
        self._refresh(cells)
        return self.objective

    def add(self, position: Cell) -> float:
        """Plant one more tree and return the new objective."""
        position = (int(position[0]), int(position[1]))
        cells = self._changed_cells(position)
        self.positions.append(position)
        self._shift_hits(position, 1)
        self._refresh(cells)
        return self.objective

    def peek_move(self, tree_index: int, new_position: Cell) -> float:
        """Objective after moving one tree, leaving the state unchanged."""
        new_position = (int(new_position[0]), int(new_position[1]))
        old = self.positions[tree_index]
        if new_position == old:
            return self.objective
        cells = self._changed_cells(old, new_position)
        snapshot = self._snapshot(cells)
        self.move(tree_index, new_position)
        objective = self.objective
        self._shift_hits(new_position, -1)
        self.positions[tree_index] = old
        self._shift_hits(old, 1)
        self._restore(cells, snapshot)
        return objective

    def peek_add(self, position: Cell) -> float:
        """Objective after planting one more tree, leaving the state unchanged."""
        position = (int(position[0]), int(position[1]))
        cells = self._changed_cells(position)
        snapshot = self._snapshot(cells)
        self.add(position)
        objective = self.objective
        self.positions.pop()
        self._shift_hits(position, -1)
        self._restore(cells, snapshot)
        return objective


# --- Fast evaluation API ---

def evaluate_fast(ctx: EvalContext, placement: TreePlacement) -> Tuple[float, np.ndarray]:
    """
    Objective (mean aggregated Tmrt over valid cells, °C) and aggregated grid.

    Raises:
        InfeasiblePlacementError: if the placement violates the constraints
    """
    verdict = validate_placement(ctx.area, placement)
    if not verdict:
        raise InfeasiblePlacementError(verdict.reason)
    state = PlacementState(ctx, placement.positions)
    return state.objective, state.grid()


def move_delta(ctx: EvalContext, placement: TreePlacement, tree_index: int, new_position: Cell) -> float:
    """Objective after moving one tree, updating only the affected cells."""
    state = PlacementState(ctx, placement.positions)
    if not state.can_place(new_position, ignore=tree_index):
        raise InfeasiblePlacementError(f"moving tree {tree_index} to {tuple(new_position)} is infeasible")
    return state.peek_move(tree_index, new_position)


def delta_map_single_tree(ctx: EvalContext, progress: bool = False) -> np.ndarray:
    """
    Change of the objective caused by one tree at each cell.

    Cells where a tree may not stand hold +inf.
    """
    state = PlacementState(ctx)
    baseline = state.objective
    delta = np.full(ctx.shape, np.inf)
    rows, cols = np.nonzero(ctx.planting_allowed)
    for row, col in tqdm(zip(rows, cols), total=rows.size, desc="ΔTmrt map", disable=not progress, leave=False):
        delta[row, col] = state.peek_add((int(row), int(col))) - baseline
    return delta


def write_objective_trace(trace: Sequence[float], path) -> None:
    """Write (step, objective_K) rows."""
    frame = pd.DataFrame({'step': np.arange(len(trace)), 'objective_K': list(trace)})
    frame.to_csv(path, index=False, float_format='%.6f')
