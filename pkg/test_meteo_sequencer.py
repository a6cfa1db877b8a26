"""
Meteo Sequencer Tests
=====================
Solar geometry, meteo CSV handling and period selection.
"""

import logging
from datetime import datetime, timedelta

import pandas as pd
import pytest

from meteo_sequencer import (
    METEO_COLUMNS,
    MeteoRecord,
    TimePeriod,
    daily_maxima,
    load_meteo_csv,
    print_period_summary,
    select_period,
    solar_position,
    synth_meteo,
    write_meteo_csv,
)
from planting_errors import InputDataError


def _days(make_record, start, maxima, hours=24):
    """Night-time records over consecutive days whose daily maximum follows maxima."""
    records = []
    for day, peak in enumerate(maxima):
        for hour in range(hours):
            timestamp = start + timedelta(days=day, hours=hour)
            records.append(make_record(timestamp, elevation=-10.0, air_temperature=peak - abs(hour - 14) * 0.5))
    return records


# --- Solar geometry ---

def test_solstice_noon_elevation_in_munich():
    samples = [datetime(2023, 6, 21, 10, 30) + timedelta(minutes=m) for m in range(120)]
    positions = [solar_position(t, 48.0, 11.5) for t in samples]
    elevation, azimuth = max(positions)
    assert elevation == pytest.approx(90.0 - 48.0 + 23.44, abs=0.2)
    assert azimuth == pytest.approx(180.0, abs=1.5)


def test_sun_is_down_at_midnight():
    elevation, azimuth = solar_position(datetime(2023, 6, 21, 0, 0), 48.0, 11.5)
    assert elevation < 0
    assert 0.0 <= azimuth < 360.0


def test_morning_sun_stands_in_the_east():
    _, azimuth = solar_position(datetime(2023, 6, 21, 5, 0), 48.0, 11.5)
    assert 45.0 < azimuth < 135.0


def test_latitude_out_of_range():
    with pytest.raises(ValueError):
        solar_position(datetime(2023, 6, 21), 95.0, 0.0)


# --- Records ---

def test_record_validation(make_record):
    with pytest.raises(InputDataError):
        make_record(datetime(2023, 7, 1), shortwave=-1.0)
    with pytest.raises(InputDataError):
        make_record(datetime(2023, 7, 1), relative_humidity=120.0)
    with pytest.raises(InputDataError):
        MeteoRecord(datetime(2023, 7, 1), 20.0, 1.0, 0.0, 50.0, 0.0, 50.0, 101.3, -5.0, 10.0)


def test_time_period_needs_increasing_records(make_record):
    a = make_record(datetime(2023, 7, 1, 12))
    b = make_record(datetime(2023, 7, 1, 13))
    with pytest.raises(InputDataError):
        TimePeriod('custom', (b, a))
    with pytest.raises(InputDataError):
        TimePeriod('custom', ())
    period = TimePeriod('custom', (a, b))
    assert (period.start, period.end) == (a.timestamp, b.timestamp)
    assert len(period.daytime_records) == 2


# --- CSV ---

def test_meteo_csv_round_trip(tmp_path):
    records = synth_meteo(0, datetime(2023, 6, 1), 48, 48.0)
    write_meteo_csv(records, tmp_path / 'meteo.csv')
    loaded = load_meteo_csv(tmp_path / 'meteo.csv')
    assert len(loaded) == 48
    for original, copy in zip(records, loaded):
        assert copy.timestamp == original.timestamp
        assert copy.air_temperature == pytest.approx(original.air_temperature, abs=1e-9)
        assert copy.shortwave_global == pytest.approx(original.shortwave_global, abs=1e-9)
        assert copy.sun_azimuth == pytest.approx(original.sun_azimuth, abs=1e-9)


def _write_rows(path, rows):
    pd.DataFrame(rows, columns=METEO_COLUMNS).to_csv(path, index=False)


def test_night_shortwave_is_clamped(tmp_path, caplog):
    path = tmp_path / 'meteo.csv'
    _write_rows(path, [
        ['2023-07-01 01:00:00', 18.0, 1.0, 0.0, 12.0, 0.0, 60.0, 101.3, -5.0, 30.0],
        ['2023-07-01 12:00:00', 30.0, 1.0, 0.0, 800.0, 0.0, 40.0, 101.3, 60.0, 180.0],
    ])
    with caplog.at_level(logging.WARNING):
        records = load_meteo_csv(path)
    assert records[0].shortwave_global == 0.0
    assert records[1].shortwave_global == 800.0
    assert 'clamped shortwave' in caplog.text


def test_records_are_sorted(tmp_path):
    path = tmp_path / 'meteo.csv'
    _write_rows(path, [
        ['2023-07-01T13:00:00Z', 31.0, 1.0, 0.0, 700.0, 0.0, 40.0, 101.3, 55.0, 200.0],
        ['2023-07-01T12:00:00Z', 30.0, 1.0, 0.0, 800.0, 0.0, 40.0, 101.3, 60.0, 180.0],
    ])
    records = load_meteo_csv(path)
    assert [r.timestamp.hour for r in records] == [12, 13]
    assert records[0].timestamp.tzinfo is None


def test_duplicate_timestamps_are_rejected(tmp_path):
    path = tmp_path / 'meteo.csv'
    row = ['2023-07-01 12:00:00', 30.0, 1.0, 0.0, 800.0, 0.0, 40.0, 101.3, 60.0, 180.0]
    _write_rows(path, [row, row])
    with pytest.raises(InputDataError, match='duplicate'):
        load_meteo_csv(path)


def test_missing_column_is_reported(tmp_path):
    path = tmp_path / 'meteo.csv'
    frame = pd.DataFrame([['2023-07-01 12:00:00', 30.0, 1.0, 0.0, 800.0, 0.0, 40.0, 101.3, 60.0, 180.0]],
                         columns=METEO_COLUMNS).drop(columns=['rh_pct'])
    frame.to_csv(path, index=False)
    with pytest.raises(InputDataError, match='rh_pct'):
        load_meteo_csv(path)


def test_bad_timestamp_and_missing_file(tmp_path):
    path = tmp_path / 'meteo.csv'
    _write_rows(path, [['yesterday', 30.0, 1.0, 0.0, 800.0, 0.0, 40.0, 101.3, 60.0, 180.0]])
    with pytest.raises(InputDataError, match='timestamp'):
        load_meteo_csv(path)
    with pytest.raises(InputDataError):
        load_meteo_csv(tmp_path / 'absent.csv')


# --- Synthetic series ---

def test_synth_meteo_is_deterministic_and_dark_at_night():
    a = synth_meteo(7, datetime(2023, 7, 1), 72, 48.0)
    b = synth_meteo(7, datetime(2023, 7, 1), 72, 48.0)
    assert a == b
    assert all(r.shortwave_global == 0.0 for r in a if r.sun_elevation <= 0)
    assert max(r.shortwave_global for r in a) > 500.0
    with pytest.raises(ValueError):
        synth_meteo(7, datetime(2023, 7, 1), 0, 48.0)


# --- Period selection ---

def test_hottest_day(make_record):
    records = _days(make_record, datetime(2023, 7, 1), [25.0, 30.0, 28.0])
    period = select_period(records, 'hottest_day')
    assert period.label == 'day'
    assert len(period) == 24
    assert period.start == datetime(2023, 7, 2)


def test_hottest_day_skips_incomplete_days(make_record):
    records = _days(make_record, datetime(2023, 7, 1), [25.0])
    records += _days(make_record, datetime(2023, 7, 2), [40.0], hours=23)
    assert daily_maxima(records)['complete'].tolist() == [True, False]
    period = select_period(records, 'hottest_day')
    assert period.start == datetime(2023, 7, 1)


def test_hottest_day_tie_goes_to_earliest(make_record):
    records = _days(make_record, datetime(2023, 7, 1), [30.0, 30.0])
    assert select_period(records, 'hottest_day').start == datetime(2023, 7, 1)


def test_hottest_week(make_record):
    records = _days(make_record, datetime(2023, 7, 1), [20.0, 20.0] + [30.0] * 7)
    period = select_period(records, 'hottest_week')
    assert period.label == 'week'
    assert len(period) == 7 * 24
    assert period.start == datetime(2023, 7, 3)


def test_week_needs_seven_complete_days(make_record):
    records = _days(make_record, datetime(2023, 7, 1), [30.0] * 6)
    with pytest.raises(InputDataError, match='empty selection'):
        select_period(records, 'hottest_week')


def test_year_decade_and_all(make_record):
    records = _days(make_record, datetime(2022, 12, 31), [5.0, 6.0])
    assert len(select_period(records, 'year')) == 24
    assert select_period(records, 'year', 2023).start == datetime(2023, 1, 1)
    decade = select_period(records, 'decade', 2020)
    assert decade.label == 'decade' and len(decade) == 48
    assert select_period(records, 'all').label == 'custom'
    with pytest.raises(InputDataError):
        select_period(records, 'year', 1999)


def test_unknown_kind_and_empty_input(make_record):
    with pytest.raises(InputDataError):
        select_period(_days(make_record, datetime(2023, 7, 1), [20.0]), 'month')
    with pytest.raises(InputDataError):
        select_period([], 'all')


def test_period_summary_banner(capsys, sunny_period):
    print_period_summary(sunny_period)
    out = capsys.readouterr().out
    assert 'METEO SEQUENCER' in out
    assert 'Records: 3 (2 daytime, 1 night)' in out


if __name__ == "__main__":
    pytest.main([__file__])
