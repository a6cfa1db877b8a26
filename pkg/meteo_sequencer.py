"""
Meteo Sequencer Module
======================
Hourly meteorological records, solar geometry and time-period selection.

Records are sequenced by timestamp and grouped into calendar days; periods
(hottest day, hottest week, year, decade) are cut from that sequence.
"""

import logging
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

from planting_errors import InputDataError

logger = logging.getLogger(__name__)

METEO_COLUMNS = [
    'datetime', 'ta_c', 'ws_ms', 'wd_deg', 'swin_wm2', 'precip_mm',
    'rh_pct', 'press_kpa', 'sun_elev_deg', 'sun_azim_deg',
]
PERIOD_KINDS = ('hottest_day', 'hottest_week', 'year', 'decade', 'all')
HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7
TIMESTAMP_FORMAT = '%Y-%m-%d %H:%M:%S'


@dataclass(frozen=True)
class MeteoRecord:
    """One hourly meteorological sample (timestamps are naive UTC)."""
    timestamp: datetime
    air_temperature: float
    wind_speed: float
    wind_direction: float
    shortwave_global: float
    precipitation: float
    relative_humidity: float
    pressure: float
    sun_elevation: float
    sun_azimuth: float

    def __post_init__(self):
        if self.shortwave_global < 0:
            raise InputDataError(f"{self.timestamp}: negative shortwave {self.shortwave_global}")
        if not 0.0 <= self.relative_humidity <= 100.0:
            raise InputDataError(f"{self.timestamp}: relative humidity {self.relative_humidity} outside [0, 100]")
        if not -90.0 <= self.sun_elevation <= 90.0:
            raise InputDataError(f"{self.timestamp}: sun elevation {self.sun_elevation} outside [-90, 90]")
        if not 0.0 <= self.sun_azimuth < 360.0:
            raise InputDataError(f"{self.timestamp}: sun azimuth {self.sun_azimuth} outside [0, 360)")
        if self.sun_elevation <= 0 and self.shortwave_global != 0:
            raise InputDataError(f"{self.timestamp}: shortwave must be 0 while the sun is down")

    @property
    def is_daytime(self) -> bool:
        return self.sun_elevation > 0


@dataclass(frozen=True)
class TimePeriod:
    """An ordered, non-empty run of records (the period M)."""
    label: str
    records: Tuple[MeteoRecord, ...]

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise InputDataError(f"empty selection for period '{self.label}'")
        for earlier, later in zip(records, records[1:]):
            if later.timestamp <= earlier.timestamp:
                raise InputDataError(
                    f"records must be strictly increasing in time ({earlier.timestamp} -> {later.timestamp})")
        object.__setattr__(self, 'records', records)

    def __len__(self):
        return len(self.records)

    @property
    def start(self) -> datetime:
        return self.records[0].timestamp

    @property
    def end(self) -> datetime:
        return self.records[-1].timestamp

    @property
    def daytime_records(self) -> List[MeteoRecord]:
        return [r for r in self.records if r.is_daytime]

    def __repr__(self):
        return f"TimePeriod({self.label}, {len(self.records)} records, {self.start} .. {self.end})"


# --- Solar geometry (NOAA solar calculator equations) ---

_J2000 = datetime(2000, 1, 1, 12, 0, 0)


def _to_naive_utc(timestamp: datetime) -> datetime:
    if timestamp.tzinfo is not None:
        return timestamp.astimezone(timezone.utc).replace(tzinfo=None)
    return timestamp


def solar_position(timestamp: datetime, latitude: float, longitude: float) -> Tuple[float, float]:
    """
    Solar elevation and azimuth for a UTC timestamp.

    Args:
        timestamp: UTC time (naive timestamps are taken as UTC)
        latitude: Degrees north
        longitude: Degrees east

    Returns:
        (elevation, azimuth) in degrees; azimuth clockwise from north in [0, 360)
    """
    if abs(latitude) > 90:
        raise InputDataError(f"latitude out of range: {latitude}")

    timestamp = _to_naive_utc(timestamp)
    julian_day = 2451545.0 + (timestamp - _J2000).total_seconds() / 86400.0
    century = (julian_day - 2451545.0) / 36525.0

    mean_long = (280.46646 + century * (36000.76983 + century * 0.0003032)) % 360.0
    mean_anomaly = 357.52911 + century * (35999.05029 - 0.0001537 * century)
    eccentricity = 0.016708634 - century * (0.000042037 + 0.0000001267 * century)
    m_rad = math.radians(mean_anomaly)
    centre = (math.sin(m_rad) * (1.914602 - century * (0.004817 + 0.000014 * century))
              + math.sin(2 * m_rad) * (0.019993 - 0.000101 * century)
              + math.sin(3 * m_rad) * 0.000289)
    omega = math.radians(125.04 - 1934.136 * century)
    apparent_long = mean_long + centre - 0.00569 - 0.00478 * math.sin(omega)

    mean_obliquity = 23.0 + (26.0 + (21.448 - century * (46.815 + century * (0.00059 - century * 0.001813))) / 60.0) / 60.0
    obliquity = mean_obliquity + 0.00256 * math.cos(omega)
    declination = math.asin(math.sin(math.radians(obliquity)) * math.sin(math.radians(apparent_long)))

    var_y = math.tan(math.radians(obliquity / 2.0)) ** 2
    l_rad = math.radians(mean_long)
    eq_of_time = 4.0 * math.degrees(
        var_y * math.sin(2 * l_rad)
        - 2 * eccentricity * math.sin(m_rad)
        + 4 * eccentricity * var_y * math.sin(m_rad) * math.cos(2 * l_rad)
        - 0.5 * var_y * var_y * math.sin(4 * l_rad)
        - 1.25 * eccentricity * eccentricity * math.sin(2 * m_rad))

    minutes = timestamp.hour * 60.0 + timestamp.minute + timestamp.second / 60.0
    true_solar_time = (minutes + eq_of_time + 4.0 * longitude) % 1440.0
    hour_angle = math.radians(true_solar_time / 4.0 - 180.0)

    lat = math.radians(latitude)
    cos_zenith = (math.sin(lat) * math.sin(declination)
                  + math.cos(lat) * math.cos(declination) * math.cos(hour_angle))
    elevation = 90.0 - math.degrees(math.acos(min(1.0, max(-1.0, cos_zenith))))

    azimuth = math.degrees(math.atan2(
        math.sin(hour_angle),
        math.cos(hour_angle) * math.sin(lat) - math.tan(declination) * math.cos(lat))) + 180.0
    azimuth %= 360.0
    if azimuth >= 360.0:
        azimuth = 0.0
    return elevation, azimuth


# --- CSV I/O ---

def _parse_timestamp(value: str) -> datetime:
    try:
        return _to_naive_utc(date_parser.isoparse(str(value).strip()))
    except (ValueError, OverflowError):
        raise InputDataError(f"unparsable timestamp: '{value}'")


def load_meteo_csv(path) -> List[MeteoRecord]:
    """
    Load hourly records from a meteorology CSV.

    Rows with the sun at or below the horizon get their shortwave clamped to 0;
    the number of clamped rows is logged as a warning.

    Args:
        path: CSV file with the METEO_COLUMNS header

    Returns:
        Records sorted by timestamp
    """
    try:
        frame = pd.read_csv(path, skipinitialspace=True, dtype={'datetime': str})
    except FileNotFoundError:
        raise InputDataError(f"meteo file not found: {path}")
    except pd.errors.EmptyDataError:
        raise InputDataError(f"meteo file is empty: {path}")

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in METEO_COLUMNS if c not in frame.columns]
    if missing:
        raise InputDataError(f"meteo file is missing column(s): {', '.join(missing)}")
    if frame.empty:
        raise InputDataError(f"meteo file has no records: {path}")

    numeric = frame[METEO_COLUMNS[1:]].apply(pd.to_numeric, errors='coerce')
    if numeric.isna().any().any():
        bad_row = int(numeric.isna().any(axis=1).to_numpy().argmax())
        raise InputDataError(f"non-numeric value in meteo row {bad_row + 1}")

    night = (numeric['sun_elev_deg'] <= 0) & (numeric['swin_wm2'] != 0)
    if night.any():
        logger.warning("clamped shortwave to 0 on %d night rows", int(night.sum()))
        numeric.loc[night, 'swin_wm2'] = 0.0

    records = []
    for stamp, row in zip(frame['datetime'], numeric.itertuples(index=False)):
        records.append(MeteoRecord(
            timestamp=_parse_timestamp(stamp),
            air_temperature=float(row.ta_c),
            wind_speed=float(row.ws_ms),
            wind_direction=float(row.wd_deg),
            shortwave_global=float(row.swin_wm2),
            precipitation=float(row.precip_mm),
            relative_humidity=float(row.rh_pct),
            pressure=float(row.press_kpa),
            sun_elevation=float(row.sun_elev_deg),
            sun_azimuth=float(row.sun_azim_deg) % 360.0,
        ))

    records.sort(key=lambda r: r.timestamp)
    for earlier, later in zip(records, records[1:]):
        if earlier.timestamp == later.timestamp:
            raise InputDataError(f"duplicate timestamp {later.timestamp}")
    logger.info("loaded %d meteo records from %s", len(records), path)
    return records


def write_meteo_csv(records: Sequence[MeteoRecord], path) -> None:
    """Write records with the METEO_COLUMNS header."""
    frame = pd.DataFrame([
        {
            'datetime': r.timestamp.strftime(TIMESTAMP_FORMAT),
            'ta_c': r.air_temperature,
            'ws_ms': r.wind_speed,
            'wd_deg': r.wind_direction,
            'swin_wm2': r.shortwave_global,
            'precip_mm': r.precipitation,
            'rh_pct': r.relative_humidity,
            'press_kpa': r.pressure,
            'sun_elev_deg': r.sun_elevation,
            'sun_azim_deg': r.sun_azimuth,
        }
        for r in records
    ], columns=METEO_COLUMNS)
    frame.to_csv(path, index=False, float_format='%.3f')


# --- Synthetic meteorology ---

def synth_meteo(seed: int, start: datetime, n_hours: int, latitude: float,
                longitude: float = 11.5) -> List[MeteoRecord]:
    """
    Generate a deterministic hourly series.

    Air temperature follows a seasonal and a diurnal sinusoid plus a per-day
    anomaly; shortwave is clear-sky irradiance scaled by a mildly noisy
    atmospheric transmittance. Values are rounded so a CSV round trip is exact.
    """
    if n_hours < 1:
        raise InputDataError(f"n_hours must be >= 1, got {n_hours}")

    rng = np.random.default_rng(seed)
    start = _to_naive_utc(start)
    n_days = n_hours // HOURS_PER_DAY + 2
    day_anomaly = rng.normal(0.0, 2.0, size=n_days)
    hour_noise = rng.normal(0.0, 0.3, size=n_hours)
    sky_noise = rng.normal(0.0, 0.05, size=n_hours)
    wind = np.abs(rng.normal(2.0, 1.0, size=n_hours))
    wind_dir = rng.uniform(0.0, 360.0, size=n_hours)

    records = []
    for h in range(n_hours):
        timestamp = start + timedelta(hours=h)
        day_of_year = timestamp.timetuple().tm_yday
        solar_hour = timestamp.hour + timestamp.minute / 60.0 + longitude / 15.0
        seasonal = 10.0 - 10.0 * math.cos(2 * math.pi * (day_of_year - 15) / 365.0)
        diurnal = 6.0 * math.sin(2 * math.pi * (solar_hour - 9.0) / 24.0)
        day_index = (timestamp.date() - start.date()).days
        air_temperature = seasonal + diurnal + day_anomaly[day_index] + hour_noise[h]
        humidity = min(100.0, max(20.0, 65.0 - 2.5 * diurnal))

        elevation, azimuth = solar_position(timestamp, latitude, longitude)
        elevation = round(elevation, 3)
        azimuth = round(azimuth, 3) % 360.0
        if elevation > 0:
            atmosphere = 0.75 * (1.0 + sky_noise[h])
            shortwave = round(max(0.0, 1000.0 * math.sin(math.radians(elevation)) * atmosphere), 3)
        else:
            shortwave = 0.0

        records.append(MeteoRecord(
            timestamp=timestamp,
            air_temperature=round(air_temperature, 3),
            wind_speed=round(float(wind[h]), 3),
            wind_direction=round(float(wind_dir[h]), 3) % 360.0,
            shortwave_global=shortwave,
            precipitation=0.0,
            relative_humidity=round(humidity, 3),
            pressure=101.3,
            sun_elevation=elevation,
            sun_azimuth=azimuth,
        ))
    return records


# --- Period selection ---

def daily_maxima(records: Sequence[MeteoRecord]) -> pd.DataFrame:
    """
    Daily maximum air temperature per calendar day.

    Returns:
        DataFrame indexed by a continuous daily DatetimeIndex with columns
        'max' and 'count'; 'complete' marks days with all 24 hourly records
    """
    frame = pd.DataFrame({
        'day': pd.to_datetime([r.timestamp.date() for r in records]),
        'ta': [r.air_temperature for r in records],
    })
    daily = frame.groupby('day')['ta'].agg(['max', 'count'])
    daily = daily.reindex(pd.date_range(daily.index.min(), daily.index.max(), freq='D'))
    daily['count'] = daily['count'].fillna(0).astype(int)
    daily['complete'] = daily['count'] == HOURS_PER_DAY
    return daily


def _records_between(records: Sequence[MeteoRecord], first: date, last: date) -> List[MeteoRecord]:
    return [r for r in records if first <= r.timestamp.date() <= last]


def select_period(records: Sequence[MeteoRecord], kind: str, year: Optional[int] = None) -> TimePeriod:
    """
    Cut a period out of an hourly record sequence.

    hottest_day and hottest_week consider whole calendar days only (24 records
    starting at 00:00); ties go to the earliest candidate.

    Args:
        records: Hourly records
        kind: One of PERIOD_KINDS
        year: Calendar year for 'year' and first year for 'decade'
              (defaults to the year of the first record)

    Returns:
        TimePeriod with label day, week, year, decade or custom
    """
    if kind not in PERIOD_KINDS:
        raise InputDataError(f"unknown period kind: {kind}")
    records = sorted(records, key=lambda r: r.timestamp)
    if not records:
        raise InputDataError("empty selection: no records")

    if kind == 'all':
        return TimePeriod('custom', tuple(records))

    if kind in ('year', 'decade'):
        first_year = records[0].timestamp.year if year is None else year
        span = 1 if kind == 'year' else 10
        chosen = [r for r in records if first_year <= r.timestamp.year < first_year + span]
        if not chosen:
            raise InputDataError(f"empty selection: no records in {kind} starting {first_year}")
        return TimePeriod(kind, tuple(chosen))

    daily = daily_maxima(records)
    complete_max = daily['max'].where(daily['complete'])

    if kind == 'hottest_day':
        if complete_max.isna().all():
            raise InputDataError("empty selection: no complete calendar day")
        day = complete_max.idxmax().date()
        return TimePeriod('day', tuple(_records_between(records, day, day)))

    window_mean = complete_max.rolling(DAYS_PER_WEEK, min_periods=DAYS_PER_WEEK).mean()
    if window_mean.isna().all():
        raise InputDataError("empty selection: no 7 consecutive complete days")
    last_day = window_mean.idxmax().date()
    first_day = last_day - timedelta(days=DAYS_PER_WEEK - 1)
    return TimePeriod('week', tuple(_records_between(records, first_day, last_day)))


def print_period_summary(period: TimePeriod) -> None:
    """Print a console summary of a period."""
    temperatures = [r.air_temperature for r in period.records]
    daytime = period.daytime_records

    print("=" * 80)
    print("🌤️  METEO SEQUENCER - PERIOD SUMMARY")
    print("=" * 80)
    print(f"\n📅 Period: {period.label}")
    print(f"   From: {period.start.strftime(TIMESTAMP_FORMAT)}")
    print(f"   To:   {period.end.strftime(TIMESTAMP_FORMAT)}")
    print(f"📊 Records: {len(period)} ({len(daytime)} daytime, {len(period) - len(daytime)} night)")
    print(f"🌡️  Air temperature: max {max(temperatures):.1f} °C, mean {np.mean(temperatures):.1f} °C")
    if daytime:
        peak = max(daytime, key=lambda r: r.shortwave_global)
        print(f"☀️  Peak shortwave: {peak.shortwave_global:.0f} W/m² at "
              f"{peak.timestamp.strftime(TIMESTAMP_FORMAT)} (elevation {peak.sun_elevation:.1f}°)")
    print("=" * 80)
    print()
