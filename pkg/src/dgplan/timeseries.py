"""Hourly measurement ingestion, standardization and synthetic datasets.

The planner consumes one year (or any span >= 24 h) of hourly records of
the four uncertain quantities: global horizontal irradiance (W/m^2), wind
speed (m/s), ambient temperature (degC) and active power demand (kW).
Records arrive as CSV with header ``timestamp,ghi,wind,temp,demand_kw``
and strictly hourly, strictly increasing timestamps.

Standardization uses the *population* standard deviation (divide by n).
This matters: cluster probabilities are later derived from cluster sizes
over n, and the two conventions must agree for the weighted-centroid
identities to hold exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

FEATURES = ("ghi", "wind", "temp", "demand_kw")
_HOUR = timedelta(hours=1)


class IngestError(Exception):
    """Malformed or invariant-violating measurement data."""


@dataclass(frozen=True)
class HourlyRecord:
    timestamp: datetime
    ghi: float        # W/m^2
    wind: float       # m/s
    temp: float       # degC
    demand_kw: float  # kW


@dataclass(frozen=True)
class Dataset:
    records: tuple[HourlyRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise IngestError("empty dataset")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def peak_demand_kw(self) -> float:
        return max(r.demand_kw for r in self.records)

    def to_matrix(self) -> np.ndarray:
        """(n_hours, 4) float64 matrix in FEATURES column order."""
        return np.array(
            [(r.ghi, r.wind, r.temp, r.demand_kw) for r in self.records],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature affine transform frozen at standardization time."""

    mean: np.ndarray   # shape (4,)
    std: np.ndarray    # shape (4,), population convention; 0 kept as-is
    zero_std: tuple[str, ...] = ()  # features that were constant (warned)


def ingest_csv(path, gap_policy: str = "reject") -> Dataset:
    """Read an hourly CSV, validating monotonicity, spacing and signs.

    gap_policy 'reject' fails on any missing hour; 'forward-fill' copies
    the previous record into each missing slot.
    """
    if gap_policy not in ("reject", "forward-fill"):
        raise ValueError(f"unknown gap_policy {gap_policy!r}")
    p = Path(path)
    if not p.exists():
        raise IngestError(f"data file not found: {p}")
    records: list[HourlyRecord] = []
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{p}: empty file") from None
        expected = ["timestamp", "ghi", "wind", "temp", "demand_kw"]
        if [h.strip() for h in header] != expected:
            missing = [c for c in expected if c not in header]
            if missing:
                raise IngestError(f"{p}: missing column(s) {missing}")
            raise IngestError(f"{p}: header must be exactly {','.join(expected)}")
        for rowno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise IngestError(f"{p} row {rowno}: expected 5 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError as exc:
                raise IngestError(f"{p} row {rowno}: bad timestamp {row[0]!r}") from exc
            vals = []
            for col, tok in zip(FEATURES, row[1:]):
                try:
                    vals.append(float(tok))
                except ValueError as exc:
                    raise IngestError(f"{p} row {rowno}: bad number in column {col}") from exc
            ghi, wind, temp, demand = vals
            for col, v in (("ghi", ghi), ("wind", wind), ("demand_kw", demand)):
                if v < 0:
                    raise IngestError(f"{p} row {rowno}: negative {col} ({v})")
            if records:
                prev = records[-1].timestamp
                if ts <= prev:
                    raise IngestError(
                        f"{p} row {rowno}: timestamp {ts.isoformat()} not after {prev.isoformat()}"
                    )
                delta = ts - prev
                n_missing = delta // _HOUR - 1
                if delta != _HOUR and delta % _HOUR != timedelta(0):
                    raise IngestError(
                        f"{p} row {rowno}: timestamp {ts.isoformat()} not on the hourly grid"
                    )
                if n_missing > 0:
                    if gap_policy == "reject":
                        raise IngestError(
                            f"{p} row {rowno}: gap of {n_missing} hour(s) before {ts.isoformat()}"
                        )
                    last = records[-1]
                    for k in range(1, n_missing + 1):
                        records.append(
                            HourlyRecord(
                                prev + k * _HOUR, last.ghi, last.wind, last.temp, last.demand_kw
                            )
                        )
            records.append(HourlyRecord(ts, ghi, wind, temp, demand))
    if not records:
        raise IngestError(f"{p}: no data rows")
    return Dataset(tuple(records))


def write_csv(ds: Dataset, path) -> None:
    """Serialize a dataset to the ingest CSV schema (floats via repr)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp,ghi,wind,temp,demand_kw\n")
        for r in ds.records:
            fh.write(
                f"{r.timestamp.isoformat(timespec='minutes')},"
                f"{r.ghi!r},{r.wind!r},{r.temp!r},{r.demand_kw!r}\n"
            )


def standardize(ds: Dataset) -> tuple[np.ndarray, FeatureStats]:
    """Z-score the dataset per feature (population std).

    Constant features get all-zero scores and are listed in
    ``stats.zero_std`` instead of raising.
    """
    m = ds.to_matrix()
    mean = m.mean(axis=0)
    std = m.std(axis=0)  # ddof=0
    zero = [FEATURES[j] for j in range(len(FEATURES)) if std[j] == 0.0]
    safe = np.where(std == 0.0, 1.0, std)
    z = (m - mean) / safe
    return z, FeatureStats(mean=mean, std=std, zero_std=tuple(zero))


def unstandardize(z: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Invert `standardize` exactly for non-constant features."""
    safe = np.where(stats.std == 0.0, 1.0, stats.std)
    return z * safe + stats.mean


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance AR(1) noise, deterministic for a given generator state."""
    eps = rng.standard_normal(n) * math.sqrt(1.0 - phi * phi)
    return lfilter([1.0], [1.0, -phi], eps)


def synth_dataset(seed: int, hours: int, profile: str = "tropical") -> Dataset:
    """Deterministic synthetic dataset standing in for station measurements.

    Diurnal irradiance (exactly zero at night), AR-smoothed wind with a
    sea-breeze or winter-storm diurnal/seasonal pattern, sinusoidal
    temperature, and demand with daily/weekly shape. All values stay in
    physical ranges (ghi <= 1200 W/m^2, wind <= 30 m/s, demand > 0).
    """
    if hours < 24:
        raise ValueError(f"need at least 24 hours, got {hours}")
    if profile not in ("tropical", "temperate"):
        raise ValueError(f"unknown profile {profile!r}")
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    hod = t % 24                       # hour of day
    day = t // 24
    doy = day % 365                    # day of year

    cloud = _ar1(rng, hours, 0.92)
    breeze = _ar1(rng, hours, 0.85)
    gust = _ar1(rng, hours, 0.55)
    t_noise = _ar1(rng, hours, 0.90)
    d_noise = _ar1(rng, hours, 0.80)

    if profile == "tropical":
        half_day = np.full(hours, 6.0)            # ~12 h of daylight year round
        season_sun = 1.0 - 0.06 * np.cos(2 * np.pi * (doy - 15) / 365.0)
        g_peak = 1020.0
        wind_base = 6.2 + 1.1 * np.cos(2 * np.pi * (doy - 40) / 365.0)
        wind_diurnal = 2.0 * np.sin(2 * np.pi * (hod - 15) / 24.0)
        temp_base = 27.0 + 1.6 * np.cos(2 * np.pi * (doy - 60) / 365.0)
        temp_diurnal = 3.2 * np.cos(2 * np.pi * (hod - 14) / 24.0)
        cooling_ref = 26.0
        heating_ref = None
    else:
        half_day = 6.0 + 2.0 * -np.cos(2 * np.pi * (doy + 10) / 365.0)  # 8..16 h daylight
        season_sun = 0.72 - 0.38 * np.cos(2 * np.pi * (doy - 172) / 365.0)
        g_peak = 980.0
        wind_base = 6.8 + 2.0 * np.cos(2 * np.pi * (doy - 20) / 365.0)
        wind_diurnal = 1.2 * np.sin(2 * np.pi * (hod - 14) / 24.0)
        temp_base = 11.0 - 10.0 * np.cos(2 * np.pi * (doy - 25) / 365.0)
        temp_diurnal = 4.0 * np.cos(2 * np.pi * (hod - 14) / 24.0)
        cooling_ref = 23.0
        heating_ref = 8.0

    # Solar elevation proxy: positive only between sunrise and sunset.
    rel = (hod - 12.0) / half_day
    elev = np.cos(rel * np.pi / 2.0)
    elev = np.where(np.abs(rel) < 1.0, np.maximum(elev, 0.0), 0.0)
    clearness = np.clip(0.72 + 0.30 * cloud, 0.12, 1.0)
    ghi = g_peak * season_sun * elev ** 1.25 * clearness
    ghi = np.clip(ghi, 0.0, 1200.0)

    wind = np.clip(wind_base + wind_diurnal + 2.1 * breeze + 0.9 * gust, 0.0, 30.0)

    temp = temp_base + temp_diurnal + 1.1 * t_noise

    weekday = (day + 6) % 7  # day 0 is a Sunday
    workday = np.where(weekday < 5, 1.0, 0.0)
    shape = (
        0.58
        + 0.13 * np.exp(-0.5 * ((hod - 19.5) / 2.2) ** 2)
        + 0.08 * np.exp(-0.5 * ((hod - 12.0) / 3.0) ** 2) * workday
        + 0.04 * workday
    )
    shape = shape + 0.010 * np.maximum(temp - cooling_ref, 0.0)
    if heating_ref is not None:
        shape = shape + 0.012 * np.maximum(heating_ref - temp, 0.0)
    shape = shape * (1.0 + 0.05 * d_noise)
    demand = 5400.0 * np.clip(shape, 0.25, 1.0)

    start = datetime(2023, 1, 1, 0, 0)
    records = tuple(
        HourlyRecord(
            start + int(i) * _HOUR,
            float(ghi[i]),
            float(wind[i]),
            float(temp[i]),
            float(demand[i]),
        )
        for i in range(hours)
    )
    return Dataset(records)
