"""
Placement Analysis
==================
Evaluates what planted trees do to a study area:

- Tmrt metrics per area and per canopy area, heat-stress hours
- When does a tree cool? A shortwave-threshold classifier over records
- Rank correlations
- Watershed extraction of existing trees from the vegetation DSM
- Counterfactual relocation of existing trees
- Hour-of-day and month profiles of the Tmrt change
- Scaling of the cooling effect with tree count and height
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage, stats
from skimage import morphology, segmentation

from meteo_sequencer import TimePeriod
from planting_errors import InputDataError
from shadow_engine import DEFAULT_SHADOW_CONFIG, ShadowConfig
from study_area import (CELL_SIZE, Cell, Grid, StudyArea, TreeGeometry, TreePlacement,
                        apply_placement, crown_area, crown_offsets, validate_placement, valid_cell_mask)
from tmrt_engine import (BinSpec, EvalContext, RadiationParams, build_context, delta_map_single_tree,
                         evaluate_fast, evaluate_reference)
from tree_optimizer import SearchConfig, iterated_local_search

logger = logging.getLogger(__name__)

HEAT_STRESS_THRESHOLD = 60.0
SHORTWAVE_THRESHOLD = 96.0
MIN_TREE_HEIGHT = 3.0


def _values(grid) -> np.ndarray:
    return grid.values if isinstance(grid, Grid) else np.asarray(grid, dtype=np.float64)


# --- Metrics ---

@dataclass
class MetricsReport:
    """Tmrt change caused by a placement."""
    delta_tmrt_mean: float
    delta_per_area: float
    delta_per_canopy_area: float
    canopy_area: float
    valid_cell_count: int
    tree_count: int
    mean_before: float
    mean_after: float
    heat_hours_before: Optional[int] = None
    heat_hours_after: Optional[int] = None
    heat_threshold: float = HEAT_STRESS_THRESHOLD

    @property
    def heat_hours_change_pct(self) -> Optional[float]:
        if self.heat_hours_before is None or self.heat_hours_after is None or self.heat_hours_before == 0:
            return None
        return 100.0 * (self.heat_hours_after - self.heat_hours_before) / self.heat_hours_before

    def to_dict(self) -> dict:
        return {
            'tree_count': self.tree_count,
            'valid_cell_count': self.valid_cell_count,
            'canopy_area_m2': self.canopy_area,
            'tmrt_mean_before_C': self.mean_before,
            'tmrt_mean_after_C': self.mean_after,
            'delta_tmrt_K': self.delta_tmrt_mean,
            'delta_per_area_K_m2': self.delta_per_area,
            'delta_per_canopy_area_K_m2': self.delta_per_canopy_area,
            'heat_threshold_C': self.heat_threshold,
            'heat_hours_before': self.heat_hours_before,
            'heat_hours_after': self.heat_hours_after,
            'heat_hours_change_pct': self.heat_hours_change_pct,
        }


def heat_hours(series: np.ndarray, valid: np.ndarray, threshold: float = HEAT_STRESS_THRESHOLD) -> int:
    """Cell-hours above threshold over a (records, H, W) Tmrt series."""
    series = np.asarray(series)
    return int(np.count_nonzero(series[:, valid] > threshold))


def compute_metrics(before, after, area: StudyArea, placement: Optional[TreePlacement],
                    threshold: float = HEAT_STRESS_THRESHOLD,
                    series_before: Optional[np.ndarray] = None,
                    series_after: Optional[np.ndarray] = None,
                    heat_hours_before: Optional[int] = None,
                    heat_hours_after: Optional[int] = None) -> MetricsReport:
    """
    Compare aggregated Tmrt grids before and after planting.

    Args:
        before: Aggregated Tmrt without the placement (Grid or array, °C)
        after: Aggregated Tmrt with the placement
        area: Study area the grids belong to
        placement: Planted trees; None or empty means no canopy
        threshold: Heat-stress threshold (°C)
        series_before: Per-record Tmrt series for heat-hour counting
        series_after: Per-record Tmrt series for heat-hour counting
        heat_hours_before: Precounted heat hours, used when series_before is None
        heat_hours_after: Precounted heat hours, used when series_after is None

    Returns:
        MetricsReport; heat hours stay None without series or counts
    """
    before, after = _values(before), _values(after)
    if before.shape != after.shape or before.shape != area.shape:
        raise InputDataError(f"grid shapes differ: {before.shape}, {after.shape}, area {area.shape}")
    valid = valid_cell_mask(area)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise InputDataError("the study area has no valid cells")

    if series_before is not None:
        heat_hours_before = heat_hours(series_before, valid, threshold)
    if series_after is not None:
        heat_hours_after = heat_hours(series_after, valid, threshold)

    delta = float((after[valid] - before[valid]).mean())
    tree_count = placement.k if placement is not None else 0
    canopy = tree_count * crown_area(placement.geometry) if tree_count else 0.0
    return MetricsReport(
        delta_tmrt_mean=delta,
        delta_per_area=delta / (n_valid * CELL_SIZE ** 2),
        delta_per_canopy_area=delta / canopy if canopy > 0 else float('nan'),
        canopy_area=canopy,
        valid_cell_count=n_valid,
        tree_count=tree_count,
        mean_before=float(before[valid].mean()),
        mean_after=float(after[valid].mean()),
        heat_hours_before=heat_hours_before,
        heat_hours_after=heat_hours_after,
        heat_threshold=threshold,
    )


def write_metrics_csv(report: MetricsReport, path) -> None:
    pd.DataFrame([report.to_dict()]).to_csv(path, index=False, float_format='%.6f')


# --- Shortwave classifier ---

@dataclass
class ShortwaveClassifier:
    """
    Predicts that trees cool when global shortwave exceeds a threshold.

    threshold/accuracy belong to the best swept threshold; the fixed rule
    uses SHORTWAVE_THRESHOLD.
    """
    threshold: float
    accuracy: float
    fixed_threshold: float = SHORTWAVE_THRESHOLD
    fixed_accuracy: float = float('nan')
    degenerate: bool = False
    n_records: int = 0

    def predict(self, shortwave, fixed: bool = False) -> np.ndarray:
        """True where trees are expected to lower Tmrt."""
        return np.asarray(shortwave, dtype=np.float64) > (self.fixed_threshold if fixed else self.threshold)

    def to_dict(self) -> dict:
        return {'threshold_Wm2': self.threshold, 'accuracy': self.accuracy,
                'fixed_threshold_Wm2': self.fixed_threshold, 'fixed_accuracy': self.fixed_accuracy,
                'degenerate': self.degenerate, 'n_records': self.n_records}


def cooling_labels(deltas: Sequence[float]) -> np.ndarray:
    """Per-record labels: True when the mean Tmrt change is negative."""
    return np.asarray(deltas, dtype=np.float64) < 0


def fit_shortwave_classifier(shortwave: Sequence[float], labels: Sequence[bool],
                             fixed_threshold: float = SHORTWAVE_THRESHOLD) -> ShortwaveClassifier:
    """
    Choose the shortwave threshold that best separates cooling records.

    Candidates are the midpoints between sorted distinct shortwave values plus
    one threshold below and one above the observed range. The lowest
    threshold wins ties.
    """
    shortwave = np.asarray(shortwave, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if shortwave.size == 0 or shortwave.shape != labels.shape:
        raise InputDataError("classifier needs equally long, non-empty shortwave and label series")

    fixed_accuracy = float(np.mean((shortwave > fixed_threshold) == labels))
    if labels.all() or not labels.any():
        threshold = float(shortwave.min() - 1.0) if labels.all() else float(shortwave.max())
        logger.warning("all %d records carry the same label; classifier is degenerate", labels.size)
        return ShortwaveClassifier(threshold, 1.0, fixed_threshold, fixed_accuracy, True, labels.size)

    distinct = np.unique(shortwave)
    candidates = np.concatenate(([distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1]]))
    accuracies = np.array([np.mean((shortwave > t) == labels) for t in candidates])
    best = int(np.argmax(accuracies))
    return ShortwaveClassifier(float(candidates[best]), float(accuracies[best]),
                               fixed_threshold, fixed_accuracy, False, labels.size)


# --- Correlation ---

def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two 1-D series of equal length")
    if x.size < 2:
        raise ValueError("spearman needs at least two values")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("rank correlation is undefined for a constant series")
    return float(stats.spearmanr(x, y).correlation)


# --- Watershed tree extraction ---

@dataclass(frozen=True)
class ExtractedTree:
    """One existing tree segmented from the vegetation DSM."""
    apex: Cell
    apex_height: float
    crown_cells: frozenset
    equivalent_diameter: float

    @property
    def crown_area(self) -> float:
        return len(self.crown_cells) * CELL_SIZE ** 2


def extract_trees_watershed(dsm_vegetation, min_height: float = MIN_TREE_HEIGHT) -> List[ExtractedTree]:
    """
    Segment individual crowns by flooding the inverted vegetation DSM.

    Local maxima (8-connected, plateaus included) at least min_height tall
    seed the basins. Every vegetated cell connected to a seed joins one
    basin; lower vegetation with no seed in reach stays unassigned.

    Returns:
        Trees ordered by apex, row-major
    """
    heights = _values(dsm_vegetation)
    vegetated = heights > 0
    if not vegetated.any():
        return []

    peaks = morphology.local_maxima(heights, connectivity=2, allow_borders=True).astype(bool)
    peaks &= vegetated & (heights >= min_height)
    markers, n_seeds = ndimage.label(peaks, structure=np.ones((3, 3), dtype=bool))
    if n_seeds == 0:
        return []
    basins = segmentation.watershed(-heights, markers, connectivity=2, mask=vegetated)

    trees = []
    for label in range(1, n_seeds + 1):
        seed_rows, seed_cols = np.nonzero(markers == label)
        apex = (int(seed_rows[0]), int(seed_cols[0]))
        apex_height = float(heights[apex])
        rows, cols = np.nonzero(basins == label)
        cells = frozenset(zip(rows.tolist(), cols.tolist()))
        diameter = 2.0 * math.sqrt(len(cells) * CELL_SIZE ** 2 / math.pi)
        trees.append(ExtractedTree(apex, apex_height, cells, diameter))
    trees.sort(key=lambda tree: tree.apex)
    logger.info("extracted %d trees from %d seeds", len(trees), n_seeds)
    return trees


def write_extracted_trees_csv(trees: Sequence[ExtractedTree], path) -> None:
    frame = pd.DataFrame(
        [(i, t.apex[0], t.apex[1], t.apex_height, t.equivalent_diameter) for i, t in enumerate(trees)],
        columns=['id', 'row', 'col', 'apex_m', 'diameter_m'],
    )
    frame.to_csv(path, index=False, float_format='%.3f')


def strip_trees(area: StudyArea, trees: Sequence[ExtractedTree]) -> StudyArea:
    """Area with the crowns of the given trees cleared from the vegetation DSM."""
    vegetation = np.array(area.dsm_vegetation.values)
    for tree in trees:
        rows, cols = zip(*tree.crown_cells)
        vegetation[list(rows), list(cols)] = 0.0
    return area.with_vegetation(vegetation)


def replacement_geometry(trees: Sequence[ExtractedTree], template: TreeGeometry = TreeGeometry()) -> TreeGeometry:
    """
    Uniform geometry whose total canopy stays within the extracted canopy.

    The crown diameter is the largest whole number of meters whose
    rasterized crown covers no more cells than the mean extracted crown;
    the height is the mean apex height.
    """
    total_canopy = sum(tree.crown_area for tree in trees)
    cells_per_tree = total_canopy / len(trees) / CELL_SIZE ** 2
    height = float(np.mean([tree.apex_height for tree in trees]))
    geometry = replace(template, height=height, crown_diameter=1.0)
    while True:
        wider = replace(geometry, crown_diameter=geometry.crown_diameter + 1.0)
        if len(crown_offsets(wider)[0]) > cells_per_tree:
            return geometry
        geometry = wider


# --- Counterfactual relocation ---

@dataclass
class CounterfactualResult:
    """Outcome of relocating the existing trees."""
    extracted: List[ExtractedTree]
    placement: Optional[TreePlacement]
    factual_objective: float
    relocated_objective: float
    metrics: Optional[MetricsReport]
    veg_diff: Optional[Grid]
    trace: List[float] = field(default_factory=list)
    replanted_objective: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return not self.extracted


def counterfactual_relocate(ctx_factual: EvalContext, config: SearchConfig,
                            min_height: float = MIN_TREE_HEIGHT,
                            heat_threshold: float = HEAT_STRESS_THRESHOLD,
                            reference: bool = True, progress: bool = False) -> CounterfactualResult:
    """
    Could the existing trees have been planted somewhere better?

    Extracts the existing trees, clears their crowns and plants the same
    number of uniform trees, sized to the extracted canopy area, where the
    iterated local search puts them. Every metric compares against the
    area as it is; the existing apexes re-planted with the uniform geometry
    are reported separately as replanted_objective.

    Args:
        ctx_factual: Context of the area as it is, existing trees included
        config: Search configuration; k is replaced by the extracted tree count
        min_height: Minimum apex height of an extracted tree (m)
        heat_threshold: Heat-stress threshold for the metrics (°C)
        reference: Count heat hours with the per-record reference evaluator
        progress: Show progress bars

    Returns:
        CounterfactualResult; empty when no tree is found
    """
    area = ctx_factual.area
    trees = extract_trees_watershed(area.dsm_vegetation, min_height)
    if not trees:
        logger.info("no existing trees to relocate")
        return CounterfactualResult([], None, ctx_factual.baseline_objective,
                                    ctx_factual.baseline_objective, None, None)

    geometry = replacement_geometry(trees, ctx_factual.geometry)
    stripped = strip_trees(area, trees)
    ctx = build_context(stripped, ctx_factual.period, ctx_factual.params, ctx_factual.bin_spec,
                        geometry, ctx_factual.config, progress=progress)

    factual_objective, factual_grid = ctx_factual.baseline_objective, ctx_factual.baseline
    replanted = TreePlacement(tuple(tree.apex for tree in trees), geometry)
    replanted_objective = None
    if validate_placement(stripped, replanted):
        replanted_objective, _ = evaluate_fast(ctx, replanted)
    else:
        logger.info("apexes overlap under the replacement geometry; no re-planted comparison")

    result = iterated_local_search(ctx, replace(config, k=len(trees)), progress=progress)
    _, relocated_grid = evaluate_fast(ctx, result.placement)
    relocated_area = apply_placement(stripped, result.placement)

    hours_before = hours_after = None
    if reference:
        hours_before = evaluate_reference(area, ctx.period, ctx.params, ctx.config, progress=progress,
                                          heat_threshold=heat_threshold).heat_hours
        hours_after = evaluate_reference(stripped, ctx.period, ctx.params, ctx.config,
                                         placement=result.placement, progress=progress,
                                         heat_threshold=heat_threshold).heat_hours
    metrics = compute_metrics(factual_grid, relocated_grid, area, result.placement, heat_threshold,
                              heat_hours_before=hours_before, heat_hours_after=hours_after)

    veg_diff = area.dsm_vegetation.with_values(
        relocated_area.dsm_vegetation.values - area.dsm_vegetation.values)
    logger.info("relocated %d trees: %.4f -> %.4f °C", len(trees), factual_objective, result.objective)
    return CounterfactualResult(trees, result.placement, factual_objective, result.objective,
                                metrics, veg_diff, result.trace, replanted_objective)


# --- Temporal profiles ---

def per_record_delta(area: StudyArea, placement: TreePlacement, period: TimePeriod,
                     params: RadiationParams = RadiationParams(),
                     config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                     threads: int = 1, progress: bool = False) -> np.ndarray:
    """Spatial-mean Tmrt change of every record (with minus without the trees)."""
    if placement.k == 0:
        return np.zeros(len(period))
    without = evaluate_reference(area, period, params, config, threads=threads, progress=progress)
    with_trees = evaluate_reference(area, period, params, config, placement=placement,
                                    threads=threads, progress=progress)
    return with_trees.record_means - without.record_means


def fold_profiles(period: TimePeriod, deltas: Sequence[float]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Fold per-record changes into hour-of-day and month bins.

    Both frames carry delta_tmrt_K (bin mean), shortwave_Wm2 (bin mean of
    global shortwave) and records (bin size).
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size != len(period):
        raise ValueError(f"{deltas.size} deltas for {len(period)} records")
    frame = pd.DataFrame({
        'hour': [r.timestamp.hour for r in period.records],
        'month': [r.timestamp.month for r in period.records],
        'delta_tmrt_K': deltas,
        'shortwave_Wm2': [r.shortwave_global for r in period.records],
    })

    def fold(key):
        grouped = frame.groupby(key, sort=True)
        folded = grouped[['delta_tmrt_K', 'shortwave_Wm2']].mean()
        folded['records'] = grouped.size()
        return folded.reset_index()

    return fold('hour'), fold('month')


def temporal_profiles(area: StudyArea, placement: TreePlacement, period: TimePeriod,
                      params: RadiationParams = RadiationParams(),
                      config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                      threads: int = 1, progress: bool = False) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Hour-of-day and monthly mean Tmrt change caused by the placement."""
    deltas = per_record_delta(area, placement, period, params, config, threads, progress)
    return fold_profiles(period, deltas)


def write_profiles_csv(hourly: pd.DataFrame, monthly: pd.DataFrame, hourly_path, monthly_path) -> None:
    hourly.to_csv(hourly_path, index=False, float_format='%.6f')
    monthly.to_csv(monthly_path, index=False, float_format='%.6f')


@dataclass
class PlacementAnalysis:
    metrics: MetricsReport
    hourly: pd.DataFrame
    monthly: pd.DataFrame
    classifier: ShortwaveClassifier
    deltas: np.ndarray


def analyze_placement(area: StudyArea, placement: TreePlacement, period: TimePeriod,
                      params: RadiationParams = RadiationParams(),
                      config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                      before=None, after=None,
                      threshold: float = HEAT_STRESS_THRESHOLD,
                      threads: int = 1, progress: bool = False) -> PlacementAnalysis:
    """
    Metrics, temporal profiles and shortwave classifier of one placement.

    Runs the reference evaluator once without and once with the trees.
    The aggregated grids default to the reference results.
    """
    without = evaluate_reference(area, period, params, config, threads=threads, progress=progress,
                                 heat_threshold=threshold)
    with_trees = evaluate_reference(area, period, params, config, placement=placement, threads=threads,
                                    progress=progress, heat_threshold=threshold)
    metrics = compute_metrics(without.aggregated if before is None else before,
                              with_trees.aggregated if after is None else after,
                              area, placement, threshold,
                              heat_hours_before=without.heat_hours, heat_hours_after=with_trees.heat_hours)
    deltas = with_trees.record_means - without.record_means
    hourly, monthly = fold_profiles(period, deltas)
    classifier = fit_shortwave_classifier([r.shortwave_global for r in period.records], cooling_labels(deltas))
    return PlacementAnalysis(metrics, hourly, monthly, classifier, deltas)


# --- Scaling with tree count and height ---

def scaling_study(area: StudyArea, period: TimePeriod, params: RadiationParams = RadiationParams(),
                  bin_spec: BinSpec = BinSpec(), config: ShadowConfig = DEFAULT_SHADOW_CONFIG,
                  search: Optional[SearchConfig] = None,
                  tree_counts: Sequence[int] = (10, 20, 30, 40, 50),
                  heights: Sequence[float] = (12.0,),
                  geometry: TreeGeometry = TreeGeometry(),
                  progress: bool = False) -> Tuple[pd.DataFrame, float]:
    """
    Optimize increasing tree counts and heights and relate cooling to canopy.

    Returns:
        One row per (height, k) with canopy_area_m2, delta_K and
        delta_per_canopy_K_m2, and the Spearman correlation between the
        per-canopy change and the canopy area (NaN with fewer than two
        distinct rows)
    """
    search = search or SearchConfig(k=1)
    rows = []
    for height in heights:
        tree = replace(geometry, height=float(height))
        ctx = build_context(area, period, params, bin_spec, tree, config, progress=progress)
        delta_map = delta_map_single_tree(ctx, progress=progress)
        for k in tree_counts:
            result = iterated_local_search(ctx, replace(search, k=int(k)), delta_map=delta_map, progress=progress)
            delta = result.objective - ctx.baseline_objective
            canopy = k * crown_area(tree)
            rows.append({'height_m': float(height), 'k': int(k), 'canopy_area_m2': canopy,
                         'objective_C': result.objective, 'delta_K': delta,
                         'delta_per_canopy_K_m2': delta / canopy})
            logger.info("height %.1f m, k=%d: ΔTmrt %.5f K", height, k, delta)

    table = pd.DataFrame(rows)
    try:
        rho = spearman(table['delta_per_canopy_K_m2'], table['canopy_area_m2'])
    except ValueError:
        rho = float('nan')
    return table, rho
