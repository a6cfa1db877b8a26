"""
Tree Planting Command Line
==========================
Subcommands:
    synth           synthetic study area and meteo series
    svf             sky view factor rasters of a study area
    simulate        aggregated Tmrt, fast evaluator against the reference
    optimize        tree placement bundle (ILS or a comparison method)
    counterfactual  relocate the existing trees of an area
    analyze         metrics, temporal profiles and shortwave classifier

Exit codes: 0 success, 2 input error, 3 infeasible placement or capacity,
4 internal invariant violation.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from dateutil.parser import isoparse

from master_pipeline import METHODS, PERIOD_ALIASES, MasterPlantingPipeline, RunConfig, banner, write_raster
from planting_errors import InputDataError, PlantingError

logger = logging.getLogger('tree_planting')


def _parse_params(pairs: Optional[List[str]]) -> dict:
    params = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise InputDataError(f"malformed --params entry '{pair}', expected key=value")
        params[key.strip()] = value.strip()
    return params


def run_config(args: argparse.Namespace) -> RunConfig:
    """Collect the parsed flags into a RunConfig."""
    values = {f.name: getattr(args, f.name) for f in fields(RunConfig) if hasattr(args, f.name)}
    values['params'] = _parse_params(getattr(args, 'params', None))
    return RunConfig(**values)


def _require(config: RunConfig, *names: str) -> None:
    missing = [f"--{name}" for name in names if not getattr(config, name)]
    if missing:
        raise InputDataError(f"missing required flag(s): {', '.join(missing)}")


def _out_dir(config: RunConfig) -> Path:
    _require(config, 'out')
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- Commands ---

def cmd_synth(config: RunConfig) -> int:
    """Write a synthetic study area plus meteo.csv."""
    from meteo_sequencer import synth_meteo, write_meteo_csv
    from study_area import SynthSpec, save_study_area, synth_study_area

    out = _out_dir(config)
    spec = SynthSpec(width=config.size, height=config.size,
                     building_density=config.building_density,
                     vegetation_density=config.vegetation_density,
                     street_pattern=config.street_pattern, water_strip=config.water_strip,
                     latitude=config.latitude, longitude=config.longitude)
    area = synth_study_area(config.seed, spec)
    try:
        start = isoparse(config.start)
    except ValueError as e:
        raise InputDataError(f"malformed --start '{config.start}': {e}")
    records = synth_meteo(config.seed, start, config.hours, config.latitude, config.longitude)

    save_study_area(area, out)
    write_meteo_csv(records, out / 'meteo.csv')
    config.write(out)
    print(f"✅ Synthetic area {area.shape[0]}x{area.shape[1]} and {len(records)} meteo records in {out}")
    return 0


def cmd_svf(config: RunConfig) -> int:
    """Compute and write svf_total.asc, svf_build.asc and svf_veg.asc."""
    from shadow_engine import compute_svf, write_svf
    from study_area import load_study_area

    _require(config, 'area')
    out = _out_dir(config)
    area = load_study_area(config.area)
    params = config.radiation_params()
    svf = compute_svf(area, params.transmissivity, progress=not config.quiet)
    for path in write_svf(svf, out, template=area.dem):
        print(f"   ✅ {path.name}")
    config.write(out)
    print(f"📊 Mean total SVF: {svf.svf_total.mean():.4f}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """Aggregated Tmrt from the fast and the reference evaluator."""
    from tmrt_engine import evaluate_fast, evaluate_reference
    from tree_optimizer import read_placement_csv
    from study_area import TreePlacement, valid_cell_mask

    out = _out_dir(config)
    pipeline = MasterPlantingPipeline(config, progress=not config.quiet)
    banner("SIMULATE: LOAD INPUTS")
    pipeline.load_inputs()
    banner("SIMULATE: FAST AND REFERENCE EVALUATION")
    ctx = pipeline.build_context()

    geometry = config.geometry()
    placement = (read_placement_csv(config.placement, geometry) if config.placement
                 else TreePlacement((), geometry))
    fast_objective, fast = evaluate_fast(ctx, placement)
    reference = evaluate_reference(ctx.area, ctx.period, ctx.params, ctx.config, placement=placement,
                                   threads=config.threads, progress=not config.quiet)
    valid = valid_cell_mask(ctx.area)
    difference = np.abs(fast - reference.aggregated)[valid]

    write_raster(ctx.area, fast, out / 'tmrt_fast.asc')
    write_raster(ctx.area, reference.aggregated, out / 'tmrt_reference.asc')
    stats = pd.DataFrame([{
        'records': len(ctx.period),
        'sun_bins': len(ctx.bins),
        'trees': placement.k,
        'objective_fast_C': fast_objective,
        'objective_reference_C': reference.objective(valid),
        'mean_abs_diff_K': float(difference.mean()) if difference.size else float('nan'),
        'max_abs_diff_K': float(difference.max()) if difference.size else float('nan'),
    }])
    stats.to_csv(out / 'simulate_stats.csv', index=False, float_format='%.6f')
    config.write(out)

    print(f"🌡️  Fast objective:      {fast_objective:.4f} °C")
    print(f"🌡️  Reference objective: {reference.objective(valid):.4f} °C")
    print(f"📏 Mean |fast - reference|: {stats['mean_abs_diff_K'].iloc[0]:.4f} K")
    return 0


def cmd_optimize(config: RunConfig) -> int:
    """Run the full planting pipeline."""
    _require(config, 'out')
    MasterPlantingPipeline(config, progress=not config.quiet).run()
    return 0


def cmd_counterfactual(config: RunConfig) -> int:
    """Extract the existing trees and re-optimize their positions."""
    from placement_analysis import counterfactual_relocate, write_extracted_trees_csv, write_metrics_csv
    from tmrt_engine import write_objective_trace
    from tree_optimizer import write_placement_csv

    out = _out_dir(config)
    pipeline = MasterPlantingPipeline(config, progress=not config.quiet)
    banner("COUNTERFACTUAL: LOAD INPUTS")
    pipeline.load_inputs()
    banner("COUNTERFACTUAL: FACTUAL CONTEXT")
    ctx = pipeline.build_context()
    banner("COUNTERFACTUAL: RELOCATE EXISTING TREES")
    result = counterfactual_relocate(ctx, config.search_config(), heat_threshold=config.heat_threshold,
                                     progress=not config.quiet)

    write_extracted_trees_csv(result.extracted, out / 'trees_extracted.csv')
    config.write(out)
    if result.is_empty:
        print("ℹ️  No existing trees found - nothing to relocate")
        return 0

    write_placement_csv(result.placement, out / 'placement.csv')
    write_objective_trace(result.trace, out / 'objective_trace.csv')
    write_metrics_csv(result.metrics, out / 'metrics.csv')
    write_raster(ctx.area, result.veg_diff.values, out / 'veg_diff.asc')

    metrics = result.metrics
    print(f"🌳 Trees relocated: {len(result.extracted)} "
          f"(crown {result.placement.geometry.crown_diameter:.0f} m, height {result.placement.geometry.height:.1f} m)")
    print(f"🌡️  Mean Tmrt: {result.factual_objective:.4f} °C -> {result.relocated_objective:.4f} °C")
    if result.replanted_objective is not None:
        print(f"   Same apexes with uniform trees: {result.replanted_objective:.4f} °C")
    if metrics.heat_hours_before is not None:
        print(f"🔥 Cell-hours above {metrics.heat_threshold:.0f} °C: "
              f"{metrics.heat_hours_before} -> {metrics.heat_hours_after}")
    return 0


def cmd_analyze(config: RunConfig) -> int:
    """Metrics, hourly and monthly profiles and the shortwave classifier of a placement."""
    from placement_analysis import analyze_placement, write_metrics_csv, write_profiles_csv
    from study_area import read_ascii_grid
    from tree_optimizer import read_placement_csv

    _require(config, 'placement')
    out = _out_dir(config)
    pipeline = MasterPlantingPipeline(config, progress=not config.quiet)
    banner("ANALYZE: LOAD INPUTS")
    period = pipeline.load_inputs()
    area = pipeline.area

    placement = read_placement_csv(config.placement, config.geometry())
    before = read_ascii_grid(config.before) if config.before else None
    after = read_ascii_grid(config.after) if config.after else None

    banner("ANALYZE: REFERENCE EVALUATION")
    analysis = analyze_placement(area, placement, period, config.radiation_params(),
                                 before=before, after=after, threshold=config.heat_threshold,
                                 threads=config.threads, progress=not config.quiet)

    write_metrics_csv(analysis.metrics, out / 'metrics.csv')
    write_profiles_csv(analysis.hourly, analysis.monthly, out / 'profiles_hourly.csv', out / 'profiles_monthly.csv')
    pd.DataFrame([analysis.classifier.to_dict()]).to_csv(out / 'shortwave_classifier.csv', index=False,
                                                          float_format='%.6f')
    config.write(out)

    metrics, classifier = analysis.metrics, analysis.classifier
    print(f"🌡️  ΔTmrt: {metrics.delta_tmrt_mean:.4f} K ({metrics.delta_per_canopy_area:.3e} K/m² canopy)")
    print(f"☀️  Shortwave threshold: {classifier.threshold:.1f} W/m², accuracy {classifier.accuracy:.3f} "
          f"(fixed {classifier.fixed_threshold:.0f} W/m²: {classifier.fixed_accuracy:.3f})")
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'svf': cmd_svf,
    'simulate': cmd_simulate,
    'optimize': cmd_optimize,
    'counterfactual': cmd_counterfactual,
    'analyze': cmd_analyze,
}


# --- Parser ---

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--threads', type=int, default=1, help='worker threads (results do not depend on it)')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    parser.add_argument('--quiet', action='store_true', help='no progress bars')
    parser.add_argument('--params', nargs='*', metavar='KEY=VALUE', help='radiation parameter overrides')


def _add_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--area', help='study area directory')
    parser.add_argument('--meteo', help='meteo CSV file')
    parser.add_argument('--period', choices=list(PERIOD_ALIASES), default='day')
    parser.add_argument('--year', type=int, help='first year of a year or decade period')
    parser.add_argument('--bins', default='36x9', help='sun bins as AZIMUTHxELEVATION')
    parser.add_argument('--tree-height', dest='tree_height', type=float, default=12.0)
    parser.add_argument('--crown-diameter', dest='crown_diameter', type=float, default=9.0)
    parser.add_argument('--heat-threshold', dest='heat_threshold', type=float, default=60.0)


def _add_search(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--k', type=int, default=10, help='number of trees')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--ils-iterations', dest='ils_iterations', type=int, default=5)
    parser.add_argument('--ga-generations', dest='ga_generations', type=int, default=200)
    parser.add_argument('--population', type=int, default=20)
    parser.add_argument('--buffer-size', dest='buffer_size', type=int, default=5)
    parser.add_argument('--mutation-rate', dest='mutation_rate', type=float, default=0.1)
    parser.add_argument('--tau', type=float, default=1.0, help='softmax temperature of cell sampling')
    parser.add_argument('--baseline-generations', dest='baseline_generations', type=int, default=5000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='tree_planting',
        description='Optimize tree positions against aggregated mean radiant temperature',
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', help='write a synthetic study area and meteo series')
    _add_common(synth)
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--size', type=int, default=128)
    synth.add_argument('--building-density', dest='building_density', type=float, default=0.3)
    synth.add_argument('--vegetation-density', dest='vegetation_density', type=float, default=0.1)
    synth.add_argument('--street-pattern', dest='street_pattern', choices=['grid', 'none'], default='grid')
    synth.add_argument('--water-strip', dest='water_strip', action='store_true')
    synth.add_argument('--start', default='2023-06-01', help='first meteo timestamp (ISO 8601, UTC)')
    synth.add_argument('--hours', type=int, default=24 * 61)
    synth.add_argument('--latitude', type=float, default=48.0)
    synth.add_argument('--longitude', type=float, default=11.5)

    svf = commands.add_parser('svf', help='sky view factor rasters')
    _add_common(svf)
    svf.add_argument('--area', help='study area directory')

    simulate = commands.add_parser('simulate', help='fast against reference aggregated Tmrt')
    _add_common(simulate)
    _add_inputs(simulate)
    simulate.add_argument('--placement', help='placement.csv with trees to add')

    optimize = commands.add_parser('optimize', help='optimize a tree placement')
    _add_common(optimize)
    _add_inputs(optimize)
    _add_search(optimize)
    optimize.add_argument('--method', choices=list(METHODS), default='ils')

    counterfactual = commands.add_parser('counterfactual', help='relocate the existing trees')
    _add_common(counterfactual)
    _add_inputs(counterfactual)
    _add_search(counterfactual)

    analyze = commands.add_parser('analyze', help='metrics and temporal profiles of a placement')
    _add_common(analyze)
    _add_inputs(analyze)
    analyze.add_argument('--placement', help='placement.csv')
    analyze.add_argument('--before', help='aggregated Tmrt raster without the trees')
    analyze.add_argument('--after', help='aggregated Tmrt raster with the trees')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = run_config(args)
        return COMMANDS[config.command](config)
    except PlantingError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
