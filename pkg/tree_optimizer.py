"""
Tree Placement Optimizer
========================

Searches for k non-overlapping tree positions that minimize the mean
aggregated Tmrt of a study area.

The search is an iterated local search:
    1. Greedy top-k initialization from the single-tree ΔTmrt map
    2. Hill climbing over the 8-neighbourhood of every tree
    3. Repeated genetic-algorithm perturbation of a buffer of the best
       local optima, each followed by hill climbing

Comparison baselines (random, greedy on Tmrt, greedy on ΔTmrt, plain
genetic algorithm) and an ablation runner live here as well.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from planting_errors import CapacityError, InputDataError
from study_area import Cell, TreeGeometry, TreePlacement
from tmrt_engine import EvalContext, PlacementState, delta_map_single_tree

logger = logging.getLogger(__name__)

BASELINE_KINDS = ('random', 'greedy_tmrt', 'greedy_delta', 'genetic')

# Clockwise from north
NEIGHBOURS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

IMPROVEMENT_TOLERANCE = 1e-9

# Attempts at a full redraw before a sampler gives up
MAX_REDRAWS = 20

# Stream tags for seeded generators
_INIT_STREAM = 1
_GA_STREAM = 2
_KICK_STREAM = 3
_BASELINE_STREAM = 4


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the iterated local search and its baselines."""
    k: int
    ils_iterations: int = 5
    buffer_size: int = 5
    ga_population: int = 20
    ga_generations_per_perturbation: int = 200
    ga_mutation_rate: float = 0.1
    softmax_temperature: float = 1.0
    rng_seed: int = 0
    baseline_genetic_generations: int = 5000
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise InputDataError(f"k must be at least 1, got {self.k}")
        if self.ils_iterations < 1:
            raise InputDataError(f"ils_iterations must be at least 1, got {self.ils_iterations}")
        if self.buffer_size < 1:
            raise InputDataError(f"buffer_size must be at least 1, got {self.buffer_size}")
        if self.ga_population < 2:
            raise InputDataError(f"ga_population must be at least 2, got {self.ga_population}")
        if self.ga_generations_per_perturbation < 0 or self.baseline_genetic_generations < 0:
            raise InputDataError("generation counts must be non-negative")
        if not 0.0 <= self.ga_mutation_rate <= 1.0:
            raise InputDataError(f"ga_mutation_rate must be in [0, 1], got {self.ga_mutation_rate}")
        if not self.softmax_temperature > 0:
            raise InputDataError(f"softmax_temperature must be positive, got {self.softmax_temperature}")
        if self.threads < 1:
            raise InputDataError(f"threads must be at least 1, got {self.threads}")
        if self.rng_seed < 0:
            raise InputDataError(f"rng_seed must be non-negative, got {self.rng_seed}")


class OptimaBuffer:
    """
    The best distinct placements found so far, sorted by objective.

    Two placements holding the same set of cells count as duplicates.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be at least 1")
        self.capacity = capacity
        self._entries: List[Tuple[float, TreePlacement]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def insert(self, placement: TreePlacement, objective: float) -> bool:
        """
        Offer a placement to the buffer.

        Returns:
            True if the placement is held by the buffer afterwards
        """
        key = placement.position_set
        if any(held.position_set == key for _, held in self._entries):
            return False
        self._entries.append((float(objective), placement))
        self._entries.sort(key=lambda entry: (entry[0], sorted(entry[1].positions)))
        del self._entries[self.capacity:]
        return any(held is placement for _, held in self._entries)

    @property
    def best(self) -> TreePlacement:
        if not self._entries:
            raise ValueError("buffer is empty")
        return self._entries[0][1]

    @property
    def best_objective(self) -> float:
        if not self._entries:
            raise ValueError("buffer is empty")
        return self._entries[0][0]

    @property
    def placements(self) -> List[TreePlacement]:
        return [placement for _, placement in self._entries]

    @property
    def objectives(self) -> List[float]:
        return [objective for objective, _ in self._entries]


@dataclass
class SearchResult:
    """Outcome of one optimization run."""
    placement: TreePlacement
    objective: float
    trace: List[float] = field(default_factory=list)
    buffer: Optional[OptimaBuffer] = None
    delta_map: Optional[np.ndarray] = None


# --- Sampling ---

def sample_probability(delta_map: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """
    Softmax over the cooling of a single tree.

    P(c) is proportional to exp(-ΔTmrt(c) / τ) on cells with a finite ΔTmrt
    and zero elsewhere.

    Raises:
        CapacityError: if no cell is feasible
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    delta_map = np.asarray(delta_map, dtype=np.float64)
    feasible = np.isfinite(delta_map)
    if not feasible.any():
        raise CapacityError("no feasible cell for a tree")
    logits = np.full(delta_map.shape, -np.inf)
    logits[feasible] = -delta_map[feasible] / temperature
    weights = np.exp(logits - logits[feasible].max())
    return weights / weights.sum()


@lru_cache(maxsize=32)
def _exclusion_offsets(crown_diameter: float) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets closer than one crown diameter to a tree."""
    reach = int(math.ceil(crown_diameter))
    drs, dcs = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    inside = np.hypot(drs, dcs) < crown_diameter - 1e-9
    return drs[inside], dcs[inside]


class _CellSampler:
    """Draws cells from a fixed distribution while avoiding existing trees."""

    def __init__(self, probability: np.ndarray, crown_diameter: float):
        self.shape = probability.shape
        self.probability = probability.ravel()
        self.drs, self.dcs = _exclusion_offsets(float(crown_diameter))

    def blocked(self, positions: Iterable[Cell]) -> np.ndarray:
        height, width = self.shape
        mask = np.zeros(self.shape, dtype=bool)
        for row, col in positions:
            rows = self.drs + row
            cols = self.dcs + col
            keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
            mask[rows[keep], cols[keep]] = True
        return mask.ravel()

    def draw(self, rng: np.random.Generator, avoid: Sequence[Cell] = ()) -> Cell:
        weights = self.probability
        if avoid:
            weights = np.where(self.blocked(avoid), 0.0, weights)
        cumulative = np.cumsum(weights)
        total = cumulative[-1]
        if not total > 0:
            raise CapacityError(f"no feasible cell left next to {len(avoid)} placed trees")
        index = int(np.searchsorted(cumulative, rng.random() * total, side='right'))
        index = min(index, cumulative.size - 1)
        # searchsorted can land on a trailing zero-weight cell through rounding
        while weights[index] == 0:
            index -= 1
        return divmod(index, self.shape[1])

    def draw_placement(self, rng: np.random.Generator, k: int) -> List[Cell]:
        """
        Draw k trees one after the other, starting over on a dead end.

        Raises:
            CapacityError: if every one of MAX_REDRAWS attempts got stuck
        """
        for _ in range(MAX_REDRAWS):
            try:
                positions: List[Cell] = []
                for _ in range(k):
                    positions.append(self.draw(rng, positions))
                return positions
            except CapacityError:
                continue
        raise CapacityError(f"could not draw {k} non-overlapping trees in {MAX_REDRAWS} attempts")

    def repair(self, rng: np.random.Generator, genes: Sequence[Cell], allowed: np.ndarray,
               fallback: Optional[Sequence[Cell]] = None) -> List[Cell]:
        """
        Keep feasible genes in order and redraw the others around them.

        A redraw that gets stuck starts over from scratch. When that fails
        too the feasible ``fallback`` is returned unchanged.

        Raises:
            CapacityError: if every attempt got stuck and there is no fallback
        """
        height, width = self.shape
        try:
            kept: List[Cell] = []
            for row, col in genes:
                ok = 0 <= row < height and 0 <= col < width and bool(allowed[row, col])
                if ok and kept:
                    ok = not self.blocked(kept)[row * width + col]
                kept.append((int(row), int(col)) if ok else self.draw(rng, kept))
            return kept
        except CapacityError:
            pass
        try:
            return self.draw_placement(rng, len(genes))
        except CapacityError:
            if fallback is None:
                raise
            logger.debug("repair fell back to a parent after %d redraws", MAX_REDRAWS)
            return list(fallback)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def _objective(ctx: EvalContext, positions: Sequence[Cell]) -> float:
    return PlacementState(ctx, positions).objective


def _evaluate_all(ctx: EvalContext, population: Sequence[Sequence[Cell]], threads: int) -> List[float]:
    """Objectives in population order, whatever the thread count."""
    if threads <= 1 or len(population) <= 1:
        return [_objective(ctx, genes) for genes in population]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda genes: _objective(ctx, genes), population))


def _placement(ctx: EvalContext, positions: Sequence[Cell]) -> TreePlacement:
    return TreePlacement(tuple(positions), ctx.geometry)


# --- Initialization ---

def _topk(ctx: EvalContext, scores: np.ndarray, k: int) -> TreePlacement:
    """Take cells by ascending score, skipping cells too close to taken ones."""
    flat = np.asarray(scores, dtype=np.float64).ravel()
    order = np.argsort(flat, kind='stable')
    height, width = ctx.shape
    drs, dcs = _exclusion_offsets(float(ctx.geometry.crown_diameter))
    blocked = np.zeros(flat.size, dtype=bool)
    chosen: List[Cell] = []
    for index in order:
        if len(chosen) == k or not np.isfinite(flat[index]):
            break
        if blocked[index]:
            continue
        row, col = divmod(int(index), width)
        chosen.append((row, col))
        rows, cols = drs + row, dcs + col
        keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        blocked[rows[keep] * width + cols[keep]] = True
    if len(chosen) < k:
        raise CapacityError(f"only {len(chosen)} non-overlapping feasible positions for {k} trees")
    return _placement(ctx, chosen)


def greedy_topk_init(ctx: EvalContext, k: int, delta_map: Optional[np.ndarray] = None) -> TreePlacement:
    """
    Greedy start: the k best single-tree cells, skipping overlaps.

    Ties are broken in row-major order.

    Raises:
        CapacityError: if fewer than k non-overlapping feasible cells exist
    """
    if delta_map is None:
        delta_map = delta_map_single_tree(ctx)
    return _topk(ctx, delta_map, k)


def random_init(ctx: EvalContext, k: int, rng: np.random.Generator) -> TreePlacement:
    """Uniformly random feasible placement."""
    allowed = ctx.planting_allowed.astype(np.float64)
    if allowed.sum() == 0:
        raise CapacityError("no feasible cell for a tree")
    sampler = _CellSampler(allowed / allowed.sum(), ctx.geometry.crown_diameter)
    return _placement(ctx, sampler.draw_placement(rng, k))


# --- Local search ---

def _climb(state: PlacementState) -> float:
    """First-improvement hill climbing on a live state; returns the final objective."""
    current = state.objective
    improved = True
    while improved:
        improved = False
        for index in range(len(state.positions)):
            row, col = state.positions[index]
            for dr, dc in NEIGHBOURS:
                candidate = (row + dr, col + dc)
                if not state.can_place(candidate, ignore=index):
                    continue
                if state.peek_move(index, candidate) < current - IMPROVEMENT_TOLERANCE:
                    current = state.move(index, candidate)
                    improved = True
                    break
    return current


def hill_climb(ctx: EvalContext, placement: TreePlacement) -> TreePlacement:
    """
    Move trees one cell at a time while the objective improves.

    Each sweep visits the trees in order and accepts at most one improving
    move per tree. Stops after a sweep without improvement.
    """
    state = PlacementState(ctx, placement.positions)
    _climb(state)
    return state.placement()


def _local_optimum(ctx: EvalContext, positions: Sequence[Cell], climb: bool) -> Tuple[TreePlacement, float]:
    state = PlacementState(ctx, positions)
    if climb:
        _climb(state)
    # re-evaluate from scratch so buffer entries are comparable bit for bit
    placement = state.placement()
    return placement, _objective(ctx, placement.positions)


# --- Perturbation ---

def _replace_worst(population: List[List[Cell]], fitness: List[float],
                   child: List[Cell], value: float) -> bool:
    """Put child in the slot of the worst individual if it beats it; ties keep the incumbent."""
    worst = max(range(len(population)), key=lambda i: (fitness[i], i))
    if value < fitness[worst]:
        population[worst] = child
        fitness[worst] = value
        return True
    return False


def perturb_with_ga(buffer: OptimaBuffer, ctx: EvalContext, config: SearchConfig,
                    probability: np.ndarray, generations: Optional[int] = None,
                    call_id: int = 0, fill: str = 'sample',
                    progress: bool = False) -> Tuple[TreePlacement, float]:
    """
    Steady-state genetic algorithm seeded with the buffer.

    The population starts as the buffer members, filled up with placements
    drawn from ``probability`` (fill='sample') or with copies of the buffer
    members (fill='clone'). Each generation pairs up the better half as
    parents and breeds single-point crossover children, mutated gene by gene
    from ``probability`` and repaired into feasibility. A child replaces the
    worst individual of the population only when it is better; the best
    individual is never replaced. A child whose repair gets stuck is a copy of
    its first parent.

    Args:
        buffer: Seed placements; may be empty when fill='sample'
        ctx: Evaluation context
        config: Search configuration
        probability: Cell distribution used for filling, mutation and repair
        generations: Generation count, defaults to config.ga_generations_per_perturbation
        call_id: Distinguishes the random streams of successive calls
        fill: 'sample' or 'clone'
        progress: Show a progress bar

    Returns:
        Best individual and its objective

    Raises:
        CapacityError: only when the buffer is empty and no placement of k
            trees can be drawn
    """
    if generations is None:
        generations = config.ga_generations_per_perturbation
    if generations == 0 and len(buffer):
        return buffer.best, buffer.best_objective
    if fill not in ('sample', 'clone'):
        raise ValueError(f"unknown fill: {fill}")
    if fill == 'clone' and not len(buffer):
        raise ValueError("cannot clone an empty buffer")

    k = config.k
    sampler = _CellSampler(probability, ctx.geometry.crown_diameter)
    population: List[List[Cell]] = [list(p.positions) for p in buffer.placements][:config.ga_population]
    seeds = len(population)
    while len(population) < config.ga_population:
        slot = len(population)
        if fill == 'clone':
            population.append(list(population[slot % seeds]))
        else:
            try:
                population.append(sampler.draw_placement(_rng(config.rng_seed, _GA_STREAM, call_id, 0, slot), k))
            except CapacityError:
                if not seeds:
                    raise
                population.append(list(population[slot % seeds]))
    fitness = _evaluate_all(ctx, population, config.threads)

    n_parents = max(2, config.ga_population // 2)
    for generation in tqdm(range(1, generations + 1), desc="GA", disable=not progress, leave=False):
        order = sorted(range(len(population)), key=lambda i: (fitness[i], i))
        parents = [list(population[i]) for i in order[:n_parents]]

        children = []
        for slot in range(config.ga_population - n_parents):
            rng = _rng(config.rng_seed, _GA_STREAM, call_id, generation, slot)
            mother = parents[slot % n_parents]
            father = parents[(slot + 1) % n_parents]
            cut = int(rng.integers(1, k)) if k > 1 else 1
            genes = mother[:cut] + father[cut:]
            for index in range(k):
                if rng.random() < config.ga_mutation_rate:
                    genes[index] = sampler.draw(rng)
            children.append(sampler.repair(rng, genes, ctx.planting_allowed, fallback=mother))

        for child, value in zip(children, _evaluate_all(ctx, children, config.threads)):
            _replace_worst(population, fitness, child, value)

    best = min(range(len(population)), key=lambda i: (fitness[i], i))
    return _placement(ctx, population[best]), fitness[best]


def random_kick(buffer: OptimaBuffer, ctx: EvalContext, config: SearchConfig,
                probability: np.ndarray, call_id: int = 0) -> Tuple[TreePlacement, float]:
    """Redraw some trees of the best buffered placement from ``probability``."""
    rng = _rng(config.rng_seed, _KICK_STREAM, call_id)
    sampler = _CellSampler(probability, ctx.geometry.crown_diameter)
    best = list(buffer.best.positions)
    genes = list(best)
    chosen = [i for i in range(len(genes)) if rng.random() < config.ga_mutation_rate]
    if not chosen:
        chosen = [int(rng.integers(len(genes)))]
    for index in chosen:
        genes[index] = sampler.draw(rng)
    genes = sampler.repair(rng, genes, ctx.planting_allowed, fallback=best)
    return _placement(ctx, genes), _objective(ctx, genes)


# --- Iterated local search ---

def iterated_local_search(ctx: EvalContext, config: SearchConfig,
                          delta_map: Optional[np.ndarray] = None,
                          init: str = 'greedy', perturbation: str = 'ga',
                          climb: bool = True, iterations: Optional[int] = None,
                          progress: bool = False) -> SearchResult:
    """
    Optimize the placement of config.k trees.

    Args:
        ctx: Evaluation context
        config: Search configuration
        delta_map: Precomputed single-tree ΔTmrt map
        init: 'greedy' (top-k of the ΔTmrt map) or 'random'
        perturbation: 'ga' or 'kick' (redraw a few trees without a GA)
        climb: Hill-climb every start and perturbation result
        iterations: Perturbation rounds, defaults to config.ils_iterations
        progress: Show progress bars

    Returns:
        SearchResult whose trace holds the best objective after the start
        and after every round
    """
    if iterations is None:
        iterations = config.ils_iterations
    if delta_map is None:
        delta_map = delta_map_single_tree(ctx, progress=progress)
    probability = sample_probability(delta_map, config.softmax_temperature)

    if init == 'greedy':
        start = greedy_topk_init(ctx, config.k, delta_map)
    elif init == 'random':
        start = random_init(ctx, config.k, _rng(config.rng_seed, _INIT_STREAM))
    else:
        raise ValueError(f"unknown init: {init}")
    if perturbation not in ('ga', 'kick'):
        raise ValueError(f"unknown perturbation: {perturbation}")

    buffer = OptimaBuffer(config.buffer_size)
    placement, objective = _local_optimum(ctx, start.positions, climb)
    buffer.insert(placement, objective)
    trace = [buffer.best_objective]
    logger.info("start: %.6f °C (baseline %.6f °C)", objective, ctx.baseline_objective)

    for iteration in tqdm(range(1, iterations + 1), desc="ILS", disable=not progress):
        if perturbation == 'ga':
            candidate, _ = perturb_with_ga(buffer, ctx, config, probability, call_id=iteration)
        else:
            candidate, _ = random_kick(buffer, ctx, config, probability, call_id=iteration)
        placement, objective = _local_optimum(ctx, candidate.positions, climb)
        buffer.insert(placement, objective)
        trace.append(buffer.best_objective)
        logger.info("iteration %d: %.6f °C, best %.6f °C", iteration, objective, buffer.best_objective)

    return SearchResult(placement=buffer.best, objective=buffer.best_objective, trace=trace,
                        buffer=buffer, delta_map=delta_map)


# --- Baselines ---

def run_baseline(ctx: EvalContext, config: SearchConfig, kind: str,
                 delta_map: Optional[np.ndarray] = None, progress: bool = False) -> TreePlacement:
    """
    Placement of a comparison method.

    Kinds:
        random        uniform feasible positions
        greedy_tmrt   the hottest cells of the baseline Tmrt grid
        greedy_delta  the top-k cells of the ΔTmrt map
        genetic       the genetic algorithm alone, started from ΔTmrt samples
    """
    if kind == 'random':
        return random_init(ctx, config.k, _rng(config.rng_seed, _BASELINE_STREAM))
    if kind == 'greedy_tmrt':
        scores = np.where(ctx.planting_allowed, -ctx.baseline, np.inf)
        return _topk(ctx, scores, config.k)
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline: {kind}")

    if delta_map is None:
        delta_map = delta_map_single_tree(ctx, progress=progress)
    if kind == 'greedy_delta':
        return greedy_topk_init(ctx, config.k, delta_map)
    probability = sample_probability(delta_map, config.softmax_temperature)
    placement, _ = perturb_with_ga(OptimaBuffer(1), ctx, config, probability,
                                   generations=config.baseline_genetic_generations,
                                   call_id=0, progress=progress)
    return placement


# --- Ablation ---

ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    'topk_only': dict(init=True, perturb=False, climb=False, iterate=False),
    'random_init': dict(init=False, perturb=True, climb=True, iterate=True),
    'no_ga': dict(init=True, perturb=False, climb=True, iterate=True),
    'no_hill_climb': dict(init=True, perturb=True, climb=False, iterate=True),
    'single_iteration': dict(init=True, perturb=True, climb=True, iterate=False),
    'full': dict(init=True, perturb=True, climb=True, iterate=True),
}


def ablate(ctx: EvalContext, config: SearchConfig, init: bool = True, perturb: bool = True,
           climb: bool = True, iterate: bool = True,
           delta_map: Optional[np.ndarray] = None) -> SearchResult:
    """
    Run the search with components switched off.

    init=False starts from a random placement, perturb=False replaces the
    genetic algorithm by a random redraw, climb=False skips hill climbing
    and iterate=False stops after a single round. With only init switched
    on the result is the greedy start itself.
    """
    if not any((init, perturb, climb, iterate)):
        raise ValueError("at least one search component must stay switched on")
    if delta_map is None:
        delta_map = delta_map_single_tree(ctx)
    if init and not (perturb or climb or iterate):
        placement = greedy_topk_init(ctx, config.k, delta_map)
        objective = _objective(ctx, placement.positions)
        return SearchResult(placement=placement, objective=objective, trace=[objective], delta_map=delta_map)
    return iterated_local_search(ctx, config, delta_map=delta_map,
                                 init='greedy' if init else 'random',
                                 perturbation='ga' if perturb else 'kick',
                                 climb=climb,
                                 iterations=config.ils_iterations if iterate else 1)


def ablation_table(ctx: EvalContext, config: SearchConfig, seeds: Sequence[int] = (0,),
                   variants: Optional[Sequence[str]] = None,
                   delta_map: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Objective of every ablation variant, one row per variant and seed.

    Columns: variant, seed, objective, reduction_K (baseline minus objective).
    """
    if delta_map is None:
        delta_map = delta_map_single_tree(ctx)
    rows = []
    for name in variants or ABLATION_VARIANTS:
        switches = ABLATION_VARIANTS[name]
        for seed in seeds:
            result = ablate(ctx, replace(config, rng_seed=int(seed)), delta_map=delta_map, **switches)
            rows.append({'variant': name, 'seed': int(seed), 'objective': result.objective,
                         'reduction_K': ctx.baseline_objective - result.objective})
            logger.info("ablation %s seed %d: %.6f °C", name, seed, result.objective)
    return pd.DataFrame(rows, columns=['variant', 'seed', 'objective', 'reduction_K'])


# --- Placement files ---

def write_placement_csv(placement: TreePlacement, path) -> None:
    """Write tree_id,row,col rows."""
    frame = pd.DataFrame(
        [(i, r, c) for i, (r, c) in enumerate(placement.positions)],
        columns=['tree_id', 'row', 'col'],
    )
    frame.to_csv(path, index=False)


def read_placement_csv(path, geometry: TreeGeometry = TreeGeometry()) -> TreePlacement:
    """Read a placement written by write_placement_csv."""
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"missing placement file: {path.name}")
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise InputDataError(f"unreadable placement file {path.name}: {exc}") from exc
    missing = [c for c in ('row', 'col') if c not in frame.columns]
    if missing:
        raise InputDataError(f"placement file {path.name} lacks column(s): {', '.join(missing)}")
    if 'tree_id' in frame.columns:
        frame = frame.sort_values('tree_id', kind='stable')
    try:
        positions = tuple((int(r), int(c)) for r, c in zip(frame['row'], frame['col']))
    except (TypeError, ValueError) as exc:
        raise InputDataError(f"non-integer cell in {path.name}: {exc}") from exc
    return TreePlacement(positions, geometry)
