"""
Shared Test Fixtures
====================
Tiny study areas, hand-made meteo records and one prebuilt evaluation
context, small enough to keep the suite fast.
"""

from datetime import datetime

import numpy as np
import pytest

from meteo_sequencer import MeteoRecord, TimePeriod
from study_area import LandCoverClass, TreeGeometry, area_from_arrays
from tmrt_engine import BinSpec, build_context

SMALL_TREE = TreeGeometry(height=8.0, crown_diameter=5.0)


def _record(timestamp, elevation=60.0, azimuth=180.0, shortwave=800.0,
            air_temperature=30.0, relative_humidity=40.0):
    if elevation <= 0:
        shortwave = 0.0
    return MeteoRecord(timestamp=timestamp, air_temperature=air_temperature, wind_speed=1.0,
                       wind_direction=0.0, shortwave_global=shortwave, precipitation=0.0,
                       relative_humidity=relative_humidity, pressure=101.3,
                       sun_elevation=elevation, sun_azimuth=azimuth)


@pytest.fixture
def make_record():
    return _record


@pytest.fixture(scope='session')
def small_tree():
    return SMALL_TREE


@pytest.fixture(scope='session')
def noon_period():
    return TimePeriod('custom', (_record(datetime(2023, 7, 1, 12)),))


@pytest.fixture(scope='session')
def sunny_period():
    return TimePeriod('custom', (
        _record(datetime(2023, 7, 1, 2), elevation=-10.0, azimuth=20.0,
                air_temperature=20.0, relative_humidity=70.0),
        _record(datetime(2023, 7, 1, 12)),
        _record(datetime(2023, 7, 1, 15), elevation=40.0, azimuth=240.0,
                shortwave=600.0, air_temperature=32.0),
    ))


@pytest.fixture(scope='session')
def open_area():
    return area_from_arrays(np.full((24, 24), LandCoverClass.PAVED))


@pytest.fixture(scope='session')
def block_area():
    """24x24 paved square with one 10 m building and a water strip along the south edge."""
    land_cover = np.full((24, 24), LandCoverClass.PAVED)
    land_cover[4:8, 14:20] = LandCoverClass.BUILDING
    land_cover[10:14, 2:6] = LandCoverClass.GRASS
    land_cover[20:, :] = LandCoverClass.WATER
    heights = np.where(land_cover == LandCoverClass.BUILDING, 10.0, 0.0)
    return area_from_arrays(land_cover, heights)


@pytest.fixture(scope='session')
def block_ctx(block_area, sunny_period):
    return build_context(block_area, sunny_period, bin_spec=BinSpec(36, 9), geometry=SMALL_TREE)
