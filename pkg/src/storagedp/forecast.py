"""Price ingestion and empirical-quantile scenario generation.

Input CSV schema: header ``timestamp,da,rt`` with one row per hourly or
sub-hourly observation.  Timestamps are ISO-8601 and treated as naive local
time; time zones are the caller's responsibility.  Sub-hourly rows are
averaged into their hour.

Scenario prices for hour ``t`` are the day-ahead price plus quantiles of
historical (rt - da) spreads from the same (month, hour), at levels
``(r + 0.5) / R``, interpolating linearly between order statistics.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from statistics import fmean

import numpy as np

from .dp import ScenarioSet, uniform_probs
from .errors import DataError

REQUIRED_COLUMNS = ("timestamp", "da", "rt")
SCENARIO_COLUMNS = ("stage", "sample", "price", "prob")


@dataclass(frozen=True)
class PriceRecord:
    timestamp: datetime
    da: float
    rt: float

    @property
    def spread(self) -> float:
        return self.rt - self.da


def _open(source):
    if isinstance(source, (str, Path)):
        return open(source, newline=""), str(source)
    return source, getattr(source, "name", "<stream>")


def _float(text, lineno, column, name):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"{name}:{lineno}: bad {column} value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{name}:{lineno}: non-finite {column} value {text!r}")
    return value


def ingest_csv(source) -> list[PriceRecord]:
    """Read a price CSV and return hourly records sorted by time.

    Hours with no row at all are simply absent; use :func:`find_gaps` to
    list them.  A blank ``da`` cell is allowed on sub-hourly rows as long as
    the hour has at least one DA value.
    """
    fh, name = _open(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{name}: empty file")
        header = [h.strip().lower() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise DataError(f"{name}: missing required column {col!r}")
        pos = {col: header.index(col) for col in REQUIRED_COLUMNS}
        hours = defaultdict(lambda: ([], []))
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{name}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[pos["timestamp"]].strip())
            except ValueError:
                raise DataError(
                    f"{name}:{lineno}: bad timestamp {row[pos['timestamp']]!r}") from None
            hour = ts.replace(minute=0, second=0, microsecond=0)
            da_text = row[pos["da"]].strip()
            da_list, rt_list = hours[hour]
            if da_text:
                da_list.append(_float(da_text, lineno, "da", name))
            rt_list.append(_float(row[pos["rt"]].strip(), lineno, "rt", name))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()
    if not hours:
        raise DataError(f"{name}: no data rows")
    records = []
    for hour in sorted(hours):
        da_list, rt_list = hours[hour]
        if not da_list:
            raise DataError(f"{name}: hour {hour.isoformat()} has no DA price")
        records.append(PriceRecord(hour, fmean(da_list), fmean(rt_list)))
    return records


def find_gaps(records) -> list[datetime]:
    """Hours missing between the first and last record."""
    gaps = []
    one = timedelta(hours=1)
    for a, b in zip(records, records[1:]):
        t = a.timestamp + one
        while t < b.timestamp:
            gaps.append(t)
            t += one
    return gaps


def write_price_csv(records, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS)
    for rec in records:
        writer.writerow([rec.timestamp.isoformat(), f"{rec.da:.12g}", f"{rec.rt:.12g}"])


@dataclass(frozen=True)
class SpreadQuantileModel:
    groups: dict  # (month, hour) -> sorted spreads
    fallback: dict  # hour -> sorted spreads pooled across months
    pooled: np.ndarray  # every spread
    min_group_size: int = 1

    def spreads_for(self, ts: datetime) -> np.ndarray:
        group = self.groups.get((ts.month, ts.hour))
        if group is not None and len(group) >= self.min_group_size:
            return group
        group = self.fallback.get(ts.hour)
        if group is not None and len(group) >= self.min_group_size:
            return group
        return self.pooled


def fit_spread_quantiles(train, min_group_size: int = 1) -> SpreadQuantileModel:
    if not train:
        raise DataError("no training records")
    groups = defaultdict(list)
    by_hour = defaultdict(list)
    for rec in train:
        groups[(rec.timestamp.month, rec.timestamp.hour)].append(rec.spread)
        by_hour[rec.timestamp.hour].append(rec.spread)
    return SpreadQuantileModel(
        {k: np.sort(v) for k, v in groups.items()},
        {k: np.sort(v) for k, v in by_hour.items()},
        np.sort([rec.spread for rec in train]),
        min_group_size,
    )


def quantile_levels(R: int) -> np.ndarray:
    return (np.arange(R) + 0.5) / R


def empirical_quantiles(sorted_values, levels) -> np.ndarray:
    """Linear interpolation between order statistics at position ``q * (n - 1)``."""
    return np.quantile(np.asarray(sorted_values, dtype=float), levels, method="linear")


def generate_scenarios(model: SpreadQuantileModel, timestamps, da, R: int) -> ScenarioSet:
    if R < 1:
        raise DataError(f"sample count must be >= 1, got {R}")
    if model.pooled.size == 0:
        raise DataError("empty spread model")
    da = np.asarray(da, dtype=float)
    if len(timestamps) != len(da):
        raise DataError("timestamps and DA series differ in length")
    levels = quantile_levels(R)
    prices = np.empty((len(da), R))
    for t, ts in enumerate(timestamps):
        prices[t] = da[t] + empirical_quantiles(model.spreads_for(ts), levels)
    probs = np.tile(uniform_probs(R), (len(da), 1))
    return ScenarioSet(prices, probs)


def scenarios_to_csv(scenarios: ScenarioSet, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SCENARIO_COLUMNS)
    for t in range(scenarios.T):
        for r in range(scenarios.R):
            writer.writerow([t, r, repr(float(scenarios.prices[t, r])),
                             repr(float(scenarios.probs[t, r]))])


def scenarios_from_csv(source) -> ScenarioSet:
    fh, name = _open(source)
    try:
        rows = list(csv.DictReader(fh))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()
    if not rows:
        raise DataError(f"{name}: no scenario rows")
    for col in SCENARIO_COLUMNS:
        if col not in rows[0]:
            raise DataError(f"{name}: missing required column {col!r}")
    try:
        stages = np.array([int(r["stage"]) for r in rows])
        samples = np.array([int(r["sample"]) for r in rows])
        price = np.array([float(r["price"]) for r in rows])
        prob = np.array([float(r["prob"]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from None
    T, R = stages.max() + 1, samples.max() + 1
    if len(rows) != T * R:
        raise DataError(f"{name}: expected {T * R} rows for T={T}, R={R}, got {len(rows)}")
    prices = np.full((T, R), np.nan)
    probs = np.full((T, R), np.nan)
    prices[stages, samples] = price
    probs[stages, samples] = prob
    if np.isnan(prices).any():
        raise DataError(f"{name}: duplicate or missing (stage, sample) pairs")
    return ScenarioSet(prices, probs)


def synthetic_prices(hours: int, seed: int, start: datetime = datetime(2024, 1, 1),
                     base: float = 40.0, daily_amp: float = 15.0, noise: float = 4.0,
                     spread_sd: float = 12.0, spread_corr: float = 0.7,
                     spike_prob: float = 0.02, spike_size: float = 80.0):
    """Seeded DA/RT series: daily sinusoid plus noise for DA, AR(1) spread with spikes for RT.

    The autocorrelated spread is what makes a lagged RT price informative.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    hour = (start.hour + t) % 24
    weekly = 3.0 * np.sin(2 * np.pi * t / (24 * 7))
    da = (base + daily_amp * np.sin(2 * np.pi * (hour - 9) / 24) + weekly
          + noise * rng.standard_normal(hours))
    spread = np.empty(hours)
    innov = spread_sd * np.sqrt(1 - spread_corr ** 2)
    x = 0.0
    for k in range(hours):
        x = spread_corr * x + innov * rng.standard_normal()
        spread[k] = x
    spikes = rng.random(hours) < spike_prob
    spread += spikes * spike_size * rng.standard_exponential(hours)
    rt = da + spread
    stamps = [start + timedelta(hours=int(k)) for k in t]
    return [PriceRecord(ts, float(d), float(r)) for ts, d, r in zip(stamps, da, rt)]


def records_to_csv_text(records) -> str:
    buf = io.StringIO()
    write_price_csv(records, buf)
    return buf.getvalue()
