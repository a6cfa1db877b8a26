"""
Study Area Tests
================
Rasters, tree rasterization, feasibility and study area I/O.
"""

import math
from dataclasses import replace
from itertools import permutations

import numpy as np
import pytest

from planting_errors import InfeasiblePlacementError, InputDataError
from shadow_engine import SvfMaps
from study_area import (
    Grid,
    LandCoverClass,
    SynthSpec,
    TreeGeometry,
    TreePlacement,
    apply_placement,
    area_from_arrays,
    crown_offsets,
    derive_walls,
    load_study_area,
    rasterize_tree,
    read_ascii_grid,
    remove_placement,
    save_study_area,
    synth_study_area,
    valid_cell_mask,
    validate_placement,
    write_ascii_grid,
)


# --- Grid and geometry ---

def test_grid_is_read_only():
    grid = Grid(np.zeros((3, 4)))
    assert grid.shape == (3, 4)
    with pytest.raises(ValueError):
        grid.values[0, 0] = 1.0


def test_grid_rejects_bad_input():
    with pytest.raises(InputDataError):
        Grid(np.zeros(5))
    with pytest.raises(InputDataError):
        Grid(np.zeros((3, 3)), cell_size=2.0)


@pytest.mark.parametrize('kwargs', [
    dict(crown_diameter=0.0),
    dict(height=-1.0),
    dict(trunk_height_fraction=1.0),
    dict(crown_shape='conical'),
])
def test_tree_geometry_validation(kwargs):
    with pytest.raises(ValueError):
        TreeGeometry(**kwargs)


def test_default_crown_covers_69_cells_and_peaks_at_tree_height():
    drs, dcs, heights = crown_offsets(TreeGeometry())
    assert drs.size == 69
    centre = np.nonzero((drs == 0) & (dcs == 0))[0][0]
    assert heights[centre] == pytest.approx(12.0)
    assert heights.max() == pytest.approx(12.0)
    assert heights.min() > TreeGeometry().trunk_height


@pytest.mark.parametrize('diameter', range(1, 32))
def test_crown_footprint_follows_the_disc_area(diameter):
    drs, _, _ = crown_offsets(TreeGeometry(height=12.0, crown_diameter=float(diameter)))
    assert abs(drs.size - math.pi * (diameter / 2.0) ** 2) <= math.pi * diameter


def test_rasterize_tree_clips_at_grid_edge(small_tree):
    patch = rasterize_tree(small_tree, (0, 0), (10, 10))
    assert (patch.row0, patch.col0) == (0, 0)
    assert patch.values.shape == (3, 3)
    assert patch.values[0, 0] == pytest.approx(8.0)


def test_placement_moved_keeps_geometry(small_tree):
    placement = TreePlacement(((1, 2), (5, 6)), small_tree)
    moved = placement.moved(1, (7, 7))
    assert moved.positions == ((1, 2), (7, 7))
    assert moved.geometry is small_tree
    assert TreePlacement(((5, 6), (1, 2))).position_set == placement.position_set


# --- Feasibility ---

@pytest.mark.parametrize('position, reason', [
    ((5, 15), 'building'),
    ((21, 3), 'water'),
    ((-1, 3), 'out of bounds'),
    ((3, 24), 'out of bounds'),
])
def test_validate_rejects_forbidden_cells(block_area, small_tree, position, reason):
    verdict = validate_placement(block_area, TreePlacement((position,), small_tree))
    assert not verdict
    assert reason in verdict.reason
    assert verdict.tree_index == 0


def test_validate_checks_crown_overlap(block_area, small_tree):
    overlapping = validate_placement(block_area, TreePlacement(((12, 8), (12, 12)), small_tree))
    assert not overlapping
    assert overlapping.tree_index == 1
    touching = validate_placement(block_area, TreePlacement(((12, 8), (12, 13)), small_tree))
    assert touching


@pytest.mark.parametrize('positions', [
    ((2, 2), (11, 3), (16, 10)),
    ((2, 2), (12, 8), (12, 12)),
    ((2, 2), (5, 15), (16, 10)),
])
def test_validate_ignores_tree_order(block_area, small_tree, positions):
    verdicts = {bool(validate_placement(block_area, TreePlacement(order, small_tree)))
                for order in permutations(positions)}
    assert len(verdicts) == 1


def test_grass_and_paved_cells_are_plantable(block_area, small_tree):
    assert validate_placement(block_area, TreePlacement(((11, 3), (2, 2)), small_tree))


def test_valid_mask_excludes_buildings_and_water(block_area):
    valid = valid_cell_mask(block_area)
    assert not valid[5, 15]
    assert not valid[22, 0]
    assert valid[11, 3]
    assert valid.sum() == 24 * 20 - 4 * 6


# --- Apply / remove ---

def test_apply_then_remove_restores_vegetation(open_area, small_tree):
    placement = TreePlacement(((6, 6), (12, 14)), small_tree)
    planted = apply_placement(open_area, placement)
    veg = planted.dsm_vegetation.values
    assert veg[6, 6] == pytest.approx(8.0)
    assert np.count_nonzero(veg) == 2 * 21
    cleared = remove_placement(planted, placement)
    assert not cleared.dsm_vegetation.values.any()


def test_apply_does_not_mutate_input(open_area, small_tree):
    apply_placement(open_area, TreePlacement(((6, 6),), small_tree))
    assert not open_area.dsm_vegetation.values.any()


def test_apply_marks_svf_stale(open_area, small_tree):
    ones = np.ones(open_area.shape)
    with_svf = open_area.with_svf(SvfMaps(ones, ones, ones))
    planted = apply_placement(with_svf, TreePlacement(((6, 6),), small_tree))
    assert planted.svf_stale
    assert not with_svf.svf_stale


def test_apply_rejects_infeasible(block_area, small_tree):
    with pytest.raises(InfeasiblePlacementError):
        apply_placement(block_area, TreePlacement(((5, 15),), small_tree))


def test_canopy_is_cleared_over_buildings(block_area, small_tree):
    planted = apply_placement(block_area, TreePlacement(((9, 16),), small_tree))
    veg = planted.dsm_vegetation.values
    assert veg[9, 16] > 0
    assert not veg[block_area.building_mask].any()


# --- Validation of study areas ---

def test_dimension_mismatch_is_rejected(block_area):
    with pytest.raises(InputDataError, match='dimension mismatch'):
        replace(block_area, wall_height=Grid(np.zeros((3, 3))))


def test_unknown_land_cover_code_is_rejected():
    with pytest.raises(InputDataError, match='land-cover'):
        area_from_arrays(np.full((4, 4), 7.0))


def test_vegetation_on_buildings_is_rejected():
    land_cover = np.full((4, 4), LandCoverClass.BUILDING)
    with pytest.raises(InputDataError):
        area_from_arrays(land_cover, np.full((4, 4), 5.0), vegetation=np.full((4, 4), 3.0))


# --- Walls ---

def test_derive_walls_heights_and_aspects():
    dsm = np.zeros((8, 8))
    dsm[2:6, 2:6] = 6.0
    height, aspect = derive_walls(dsm, dsm > 0)
    assert height[2, 3] == 6.0 and aspect[2, 3] == pytest.approx(0.0)
    assert height[3, 5] == 6.0 and aspect[3, 5] == pytest.approx(90.0)
    assert height[5, 3] == 6.0 and aspect[5, 3] == pytest.approx(180.0)
    assert height[3, 2] == 6.0 and aspect[3, 2] == pytest.approx(270.0)
    assert height[3, 3] == 0.0
    assert height[0, 0] == 0.0


# --- Synthetic areas ---

def test_synth_is_deterministic():
    spec = SynthSpec(width=48, height=48)
    a = synth_study_area(3, spec)
    b = synth_study_area(3, spec)
    for name in ('dsm_ground_buildings', 'dsm_vegetation', 'land_cover'):
        assert np.array_equal(getattr(a, name).values, getattr(b, name).values)


def test_synth_water_strip_and_clean_roofs():
    area = synth_study_area(1, SynthSpec(width=40, height=40, water_strip=True))
    assert (area.land_cover.values[-4:] == LandCoverClass.WATER).all()
    assert not area.dsm_vegetation.values[area.building_mask].any()


def test_synth_rejects_tiny_areas():
    with pytest.raises(InputDataError):
        synth_study_area(0, SynthSpec(width=16, height=16))


# --- I/O ---

def test_ascii_grid_keeps_header(tmp_path):
    values = np.round(np.random.default_rng(0).uniform(0, 30, size=(5, 7)), 4)
    grid = Grid(values, xllcorner=100.0, yllcorner=200.0, nodata=-1.0)
    write_ascii_grid(grid, tmp_path / 'g.asc')
    loaded = read_ascii_grid(tmp_path / 'g.asc')
    assert loaded.shape == (5, 7)
    assert (loaded.xllcorner, loaded.yllcorner, loaded.nodata) == (100.0, 200.0, -1.0)
    assert np.allclose(loaded.values, values, atol=1e-4)


def test_malformed_grid_is_rejected(tmp_path):
    path = tmp_path / 'bad.asc'
    path.write_text("ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n")
    with pytest.raises(InputDataError):
        read_ascii_grid(path)


def test_missing_raster_is_reported(tmp_path):
    with pytest.raises(InputDataError, match='missing raster file: dem.asc'):
        load_study_area(tmp_path)


def test_study_area_round_trip(tmp_path, block_area):
    ones = np.ones(block_area.shape)
    area = replace(block_area, latitude=52.5, longitude=13.4).with_svf(SvfMaps(ones * 0.8, ones * 0.9, ones))
    save_study_area(area, tmp_path)
    loaded = load_study_area(tmp_path)
    assert loaded.latitude == pytest.approx(52.5)
    assert loaded.longitude == pytest.approx(13.4)
    assert np.array_equal(loaded.land_cover.values, area.land_cover.values)
    assert np.allclose(loaded.dsm_ground_buildings.values, area.dsm_ground_buildings.values)
    assert loaded.svf is not None and not loaded.svf_stale
    assert np.allclose(loaded.svf.svf_total, 0.8)


def test_location_override(tmp_path, block_area):
    save_study_area(block_area, tmp_path)
    assert load_study_area(tmp_path, latitude=10.0).latitude == 10.0


if __name__ == "__main__":
    pytest.main([__file__])
