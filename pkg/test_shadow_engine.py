"""
Shadow Engine Tests
===================
Building and canopy shadows, sky view factors and lone-tree stamps.
"""

import math

import numpy as np
import pytest

from shadow_engine import (
    DEFAULT_SHADOW_CONFIG,
    ShadowConfig,
    SvfMaps,
    cast_shadows,
    compute_svf,
    influence_radius,
    influence_region,
    refresh_svf,
    sun_obstruction,
    tree_shadow_stamp,
    tree_svf_stamp,
    write_svf,
)
from study_area import LandCoverClass, TreePlacement, apply_placement, area_from_arrays, read_ascii_grid


@pytest.fixture(scope='module')
def tree_area(open_area, small_tree):
    return apply_placement(open_area, TreePlacement(((12, 12),), small_tree))


# --- Shadows ---

def test_open_ground_is_fully_sunlit(open_area):
    shadow = cast_shadows(open_area, 30.0, 135.0)
    assert (shadow.building_shadow == 1.0).all()
    assert (shadow.vegetation_shadow == 1.0).all()
    assert not shadow.canopy_hits.any()


def test_night_gives_zero_fields(block_area):
    shadow = cast_shadows(block_area, -4.0, 10.0)
    assert not shadow.building_shadow.any()
    assert not shadow.vegetation_shadow.any()


def test_transmissivity_range(open_area):
    with pytest.raises(ValueError):
        cast_shadows(open_area, 45.0, 180.0, transmissivity=0.0)
    with pytest.raises(ValueError):
        cast_shadows(open_area, 45.0, 180.0, transmissivity=1.5)


def test_building_shadow_falls_away_from_the_sun(block_area):
    # building occupies rows 4-7, cols 14-19; a southern sun throws its shadow north
    shadow = cast_shadows(block_area, 45.0, 180.0)
    assert shadow.building_shadow[2, 16] == 0.0
    assert shadow.building_shadow[10, 16] == 1.0
    assert shadow.building_shadow[5, 16] == 0.0
    assert shadow.building_shadow[2, 8] == 1.0


def test_low_sun_casts_longer_shadows(block_area):
    high, _ = sun_obstruction(block_area, 60.0, 180.0)
    low, _ = sun_obstruction(block_area, 20.0, 180.0)
    assert (~low).sum() > (~high).sum()
    assert not (~high & low).any()


@pytest.mark.parametrize('wall, elevation', [(10.0, 30.0), (10.0, 45.0), (6.0, 20.0), (15.0, 60.0)])
def test_wall_shadow_length(wall, elevation):
    land_cover = np.full((16, 60), LandCoverClass.PAVED)
    land_cover[:, 5] = LandCoverClass.BUILDING
    area = area_from_arrays(land_cover, np.where(land_cover == LandCoverClass.BUILDING, wall, 0.0))
    shadow = cast_shadows(area, elevation, 270.0)
    shaded = int((shadow.building_shadow[8, 6:] == 0.0).sum())
    # shadows are cast onto the evaluation height, not the ground
    expected = (wall - DEFAULT_SHADOW_CONFIG.evaluation_height) / math.tan(math.radians(elevation))
    assert abs(shaded - expected) <= 1.5
    assert (shadow.building_shadow[8, :5] == 1.0).all()


def test_canopy_attenuates_by_transmissivity(tree_area):
    shadow = cast_shadows(tree_area, 60.0, 180.0, transmissivity=0.03)
    assert shadow.canopy_hits[9, 12] >= 1
    assert shadow.vegetation_shadow[9, 12] <= 0.03 + 1e-12
    assert shadow.canopy_hits[20, 12] == 0
    assert shadow.vegetation_shadow[20, 12] == 1.0
    assert (shadow.building_shadow == 1.0).all()


# --- Sky view factor ---

def test_open_ground_sees_the_whole_sky(open_area):
    svf = compute_svf(open_area)
    for name in ('svf_total', 'svf_buildings', 'svf_vegetation'):
        assert np.allclose(getattr(svf, name), 1.0)


def test_svf_bounds_near_buildings(block_area):
    svf = compute_svf(block_area)
    assert svf.svf_buildings[3, 16] < 0.9
    assert svf.svf_buildings[16, 2] > svf.svf_buildings[3, 16]
    assert (svf.svf_total <= np.minimum(svf.svf_buildings, svf.svf_vegetation) + 1e-12).all()
    assert ((svf.svf_total >= 0) & (svf.svf_total <= 1)).all()


def test_canopy_lowers_vegetation_svf_only(tree_area):
    svf = compute_svf(tree_area)
    assert svf.svf_vegetation[12, 12] < 0.5
    assert svf.svf_vegetation[12, 12] < svf.svf_vegetation[12, 16] < 1.0
    assert np.allclose(svf.svf_buildings, 1.0)


def test_svf_beside_a_tall_wall_is_one_half():
    land_cover = np.full((64, 64), LandCoverClass.PAVED)
    land_cover[:, :32] = LandCoverClass.BUILDING
    area = area_from_arrays(land_cover, np.where(land_cover == LandCoverClass.BUILDING, 2000.0, 0.0))
    coarse = compute_svf(area).svf_buildings[32, 32]
    fine = compute_svf(area, config=ShadowConfig(n_azimuth=72, n_elevation=36)).svf_buildings[32, 32]
    assert coarse == pytest.approx(0.5, abs=0.01)
    assert fine == pytest.approx(0.5, abs=0.01)
    assert abs(fine - 0.5) <= abs(coarse - 0.5) + 1e-9


def test_svf_maps_reject_inconsistent_total():
    ones = np.ones((3, 3))
    with pytest.raises(ValueError):
        SvfMaps(svf_total=ones, svf_buildings=ones * 0.5, svf_vegetation=ones)


def test_refresh_recomputes_only_when_stale(open_area, small_tree):
    fresh = refresh_svf(open_area)
    assert fresh.svf is not None
    assert refresh_svf(fresh) is fresh
    planted = apply_placement(fresh, TreePlacement(((6, 6),), small_tree))
    assert planted.svf_stale
    refreshed = refresh_svf(planted)
    assert not refreshed.svf_stale
    assert refreshed.svf.svf_total[6, 6] < 1.0


def test_write_svf(tmp_path, block_area):
    svf = compute_svf(block_area)
    paths = write_svf(svf, tmp_path, template=block_area.dem)
    assert [p.name for p in paths] == ['svf_total.asc', 'svf_build.asc', 'svf_veg.asc']
    assert np.allclose(read_ascii_grid(paths[1]).values, svf.svf_buildings, atol=1e-6)


# --- Influence and stamps ---

def test_influence_radius(small_tree):
    assert influence_radius(small_tree, 90.0) == pytest.approx(2.5)
    assert influence_radius(small_tree, 45.0) == pytest.approx(10.5)
    with pytest.raises(ValueError):
        influence_radius(small_tree, 0.0)


def test_influence_region_is_clipped(small_tree):
    box = influence_region((1, 1), small_tree, 45.0, shape=(20, 30))
    assert (box.row0, box.col0) == (0, 0)
    assert (box.row1, box.col1) == (13, 13)
    unclipped = influence_region((1, 1), small_tree, 45.0)
    assert unclipped.row0 == -10


def test_shadow_stamp_matches_cast_shadows(open_area, tree_area, small_tree):
    for elevation, azimuth in ((60.0, 180.0), (35.0, 90.0), (50.0, 300.0)):
        _, hits = sun_obstruction(tree_area, elevation, azimuth)
        stamp = tree_shadow_stamp(small_tree, elevation, azimuth)
        rows, cols, values = stamp.clipped((12, 12), open_area.shape)
        stamped = np.zeros(open_area.shape, dtype=np.int16)
        stamped[rows, cols] = values
        assert np.array_equal(stamped, hits)


def test_svf_stamp_matches_lone_tree_svf(tree_area, small_tree):
    stamp = tree_svf_stamp(small_tree, 12)
    svf = compute_svf(tree_area).svf_vegetation
    rows, cols, values = stamp.clipped((12, 12), tree_area.shape)
    assert np.allclose(svf[rows, cols], values, atol=1e-12)
    assert ((values > 0) & (values < 1)).all()
    assert stamp.reach <= 12
    untouched = np.ones(tree_area.shape, dtype=bool)
    untouched[rows, cols] = False
    assert (1.0 - svf[untouched] < 1e-3 + 1e-12).all()


if __name__ == "__main__":
    pytest.main([__file__])
