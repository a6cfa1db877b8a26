"""
Command Line and Backend Tests
==============================
End-to-end runs on a small synthetic area: synth, svf, simulate, optimize,
analyze, exit codes, config.txt and the batch backend.
"""

import pandas as pd
import pytest

from master_pipeline import RunConfig
from planting_errors import InputDataError
from study_area import RASTER_FILES
from tree_planting_backend import TreePlantingPipeline, find_inputs
from tree_planting_cli import _parse_params, main

SMALL_RUN = ['--bins', '12x3', '--tree-height', '8', '--crown-diameter', '5', '--quiet']
SMALL_SEARCH = ['--k', '2', '--ils-iterations', '1', '--ga-generations', '2', '--population', '4']


@pytest.fixture(scope='module')
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp('synth')
    assert main(['synth', '--out', str(out), '--size', '32', '--hours', '48', '--quiet']) == 0
    return out


@pytest.fixture(scope='module')
def optimize_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp('optimize')
    code = main(['optimize', '--area', str(synth_dir), '--meteo', str(synth_dir / 'meteo.csv'),
                 '--out', str(out)] + SMALL_RUN + SMALL_SEARCH)
    assert code == 0
    return out


def _inputs(synth_dir):
    return ['--area', str(synth_dir), '--meteo', str(synth_dir / 'meteo.csv')]


# --- Configuration ---

def test_parse_params():
    assert _parse_params(['albedo_ground=0.2', ' transmissivity = 0.05 ']) == {
        'albedo_ground': '0.2', 'transmissivity': '0.05'}
    assert _parse_params(None) == {}
    with pytest.raises(InputDataError):
        _parse_params(['albedo_ground'])


def test_config_text_is_sorted_and_skips_execution_settings():
    text = RunConfig(k=3, params={'transmissivity': '0.05', 'albedo_ground': '0.2'}, threads=8).to_text()
    lines = text.splitlines()
    assert lines == sorted(lines)
    assert 'k = 3' in lines
    assert 'params = albedo_ground=0.2,transmissivity=0.05' in lines
    assert not any(line.startswith(('threads', 'verbose', 'quiet')) for line in lines)


@pytest.mark.parametrize('kwargs', [dict(period='month'), dict(method='annealing'), dict(seed=-1)])
def test_config_validation(kwargs):
    with pytest.raises(InputDataError):
        RunConfig(**kwargs)


def test_bad_geometry_is_an_input_error():
    with pytest.raises(InputDataError):
        RunConfig(crown_diameter=0.0).geometry()


# --- Commands ---

def test_synth_writes_area_and_meteo(synth_dir):
    for name in RASTER_FILES.values():
        assert (synth_dir / name).exists()
    assert len(pd.read_csv(synth_dir / 'meteo.csv')) == 48
    assert 'size = 32' in (synth_dir / 'config.txt').read_text().splitlines()


def test_svf_command(synth_dir, tmp_path):
    assert main(['svf', '--area', str(synth_dir), '--out', str(tmp_path), '--quiet']) == 0
    for name in ('svf_total.asc', 'svf_build.asc', 'svf_veg.asc'):
        assert (tmp_path / name).exists()


def test_optimize_bundle(optimize_dir):
    for name in ('placement.csv', 'objective_trace.csv', 'tmrt_before.asc', 'tmrt_after.asc',
                 'delta_tmrt.asc', 'metrics.csv', 'config.txt'):
        assert (optimize_dir / name).exists()
    assert len(pd.read_csv(optimize_dir / 'placement.csv')) == 2
    trace = pd.read_csv(optimize_dir / 'objective_trace.csv')['objective_K']
    assert trace.is_monotonic_decreasing
    config = (optimize_dir / 'config.txt').read_text().splitlines()
    assert 'k = 2' in config and 'method = ils' in config
    assert not any(line.startswith('threads') for line in config)


def test_bundle_does_not_depend_on_thread_count(synth_dir, optimize_dir, tmp_path):
    code = main(['optimize'] + _inputs(synth_dir) + ['--out', str(tmp_path), '--threads', '4']
                + SMALL_RUN + SMALL_SEARCH)
    assert code == 0
    for name in ('placement.csv', 'objective_trace.csv', 'tmrt_before.asc', 'tmrt_after.asc',
                 'delta_tmrt.asc', 'metrics.csv'):
        assert (tmp_path / name).read_bytes() == (optimize_dir / name).read_bytes(), name

    def settings(directory):
        return [line for line in (directory / 'config.txt').read_text().splitlines()
                if not line.startswith('out = ')]
    assert settings(tmp_path) == settings(optimize_dir)


def test_simulate_with_placement(synth_dir, optimize_dir, tmp_path):
    code = main(['simulate'] + _inputs(synth_dir) + ['--out', str(tmp_path),
                 '--placement', str(optimize_dir / 'placement.csv')] + SMALL_RUN)
    assert code == 0
    stats = pd.read_csv(tmp_path / 'simulate_stats.csv')
    assert stats['trees'].iloc[0] == 2
    assert (tmp_path / 'tmrt_fast.asc').exists() and (tmp_path / 'tmrt_reference.asc').exists()


def test_analyze_placement(synth_dir, optimize_dir, tmp_path):
    code = main(['analyze'] + _inputs(synth_dir) + ['--out', str(tmp_path),
                 '--placement', str(optimize_dir / 'placement.csv')] + SMALL_RUN)
    assert code == 0
    for name in ('metrics.csv', 'profiles_hourly.csv', 'profiles_monthly.csv', 'shortwave_classifier.csv'):
        assert (tmp_path / name).exists()
    assert len(pd.read_csv(tmp_path / 'profiles_hourly.csv')) == 24


# --- Exit codes ---

def test_missing_meteo_is_an_input_error(synth_dir, tmp_path):
    assert main(['optimize', '--area', str(synth_dir), '--out', str(tmp_path), '--quiet']) == 2
    assert main(['optimize', '--area', str(synth_dir), '--meteo', str(tmp_path / 'absent.csv'),
                 '--out', str(tmp_path), '--quiet']) == 2


def test_out_of_range_settings_are_input_errors(synth_dir, tmp_path):
    assert main(['synth', '--out', str(tmp_path / 'none'), '--size', '32', '--hours', '0', '--quiet']) == 2
    assert main(['optimize'] + _inputs(synth_dir) + ['--out', str(tmp_path), '--crown-diameter', '0', '--quiet']) == 2
    assert main(['optimize'] + _inputs(synth_dir) + ['--out', str(tmp_path), '--bins', '0x3', '--quiet']) == 2


def test_bad_params_are_input_errors(synth_dir, tmp_path):
    assert main(['svf', '--area', str(synth_dir), '--out', str(tmp_path), '--params', 'albedo_roof=0.2']) == 2
    assert main(['svf', '--area', str(synth_dir), '--out', str(tmp_path), '--params', 'albedo_ground']) == 2


def test_too_many_trees_is_a_capacity_error(synth_dir, tmp_path):
    code = main(['optimize'] + _inputs(synth_dir) + ['--out', str(tmp_path), '--k', '200',
                 '--ils-iterations', '1', '--bins', '12x3', '--quiet'])
    assert code == 3


# --- Backend ---

def test_find_inputs(synth_dir, tmp_path):
    found = find_inputs(str(synth_dir))
    assert found['area'] == str(synth_dir)
    assert found['meteo'] == str(synth_dir / 'meteo.csv')
    assert find_inputs(str(tmp_path)) == {'area': None, 'meteo': None}


def test_backend_run(synth_dir, tmp_path):
    pipeline = TreePlantingPipeline(str(synth_dir), str(tmp_path), k=2, ils_iterations=1, ga_generations=2,
                                    population=4, bins='12x3', tree_height=8.0, crown_diameter=5.0)
    result = pipeline.run()
    assert result['success'], result.get('error')
    assert result['output_path'].endswith('.zip')
    assert result['stats']['trees'] == 2
    assert 'placement.csv' in result['stats']['bundle_files']


def test_backend_reports_missing_inputs(tmp_path):
    result = TreePlantingPipeline(str(tmp_path / 'empty'), str(tmp_path / 'out')).run()
    assert not result['success']
    assert 'No study area' in result['error']


if __name__ == "__main__":
    pytest.main([__file__])
