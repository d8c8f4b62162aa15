"""
Sea-level-rise trends at tide gauges mapped onto counties.

Counties hosting one or more stations take the arithmetic mean of their
trends. Other coastal counties borrow from the nearest station, or from an
inverse-distance weighted average of all stations. Inland counties are set to
zero. Confidence half-widths are carried through the same way.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .dataset import nearest_rank_percentile

__all__ = [
    "StationRecord",
    "CountySlr",
    "Partition",
    "load_stations",
    "select_stations",
    "extrapolate_nearest",
    "extrapolate_idw",
    "extrapolate",
    "treated_set",
    "coastal_quantile",
]

OWN = "own_stations_mean"
NEAREST = "nearest_station"
IDW = "inverse_distance"
INLAND = "inland_zero"

STATION_COLUMNS = (
    "station_id",
    "x_km",
    "y_km",
    "trend_mm_yr",
    "ci95_halfwidth_mm_yr",
    "first_year",
    "last_year",
)


class _County(Protocol):
    fips_id: str
    x_km: float
    y_km: float
    is_coastal: bool


@dataclass(frozen=True)
class StationRecord:
    """A tide gauge. ``fips`` names the hosting county, if any."""

    station_id: str
    x_km: float
    y_km: float
    trend: float
    ci_halfwidth: float
    first_year: int
    last_year: int
    fips: str = ""

    def __post_init__(self):
        if not self.ci_halfwidth >= 0:
            raise ValueError(f"station {self.station_id}: negative CI half-width")
        if self.last_year < self.first_year:
            raise ValueError(f"station {self.station_id}: span ends before it starts")

    @property
    def location(self) -> tuple[float, float]:
        return (self.x_km, self.y_km)

    @property
    def span(self) -> int:
        return self.last_year - self.first_year


@dataclass(frozen=True)
class CountySlr:
    fips_id: str
    slr: float
    ci_halfwidth: float
    source: str

    @property
    def is_coastal(self) -> bool:
        return self.source != INLAND


@dataclass(frozen=True)
class Partition:
    treated: frozenset
    controls: frozenset
    excluded: frozenset


def load_stations(path: str | Path) -> list[StationRecord]:
    """Read ``stations.csv``; an optional ``fips`` column names the host county."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in STATION_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(missing)}")
        out = []
        for row in reader:
            out.append(
                StationRecord(
                    station_id=row["station_id"].strip(),
                    x_km=float(row["x_km"]),
                    y_km=float(row["y_km"]),
                    trend=float(row["trend_mm_yr"]),
                    ci_halfwidth=float(row["ci95_halfwidth_mm_yr"]),
                    first_year=int(row["first_year"]),
                    last_year=int(row["last_year"]),
                    fips=(row.get("fips") or "").strip(),
                )
            )
    ids = [s.station_id for s in out]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate station ids")
    return out


def select_stations(stations: Sequence[StationRecord], dataset: str = "full") -> list[StationRecord]:
    """Validate a station set against its dataset variant.

    ``"full"`` requires at least 30 years of record per station;
    ``"window1979_2007"`` requires every station to cover exactly 1979-2007.
    """
    if dataset == "full":
        short = [s.station_id for s in stations if s.span < 30]
        if short:
            raise ValueError(f"stations with less than 30 years of record: {short[:5]}")
    elif dataset == "window1979_2007":
        off = [s.station_id for s in stations if (s.first_year, s.last_year) != (1979, 2007)]
        if off:
            raise ValueError(f"stations outside the 1979-2007 window: {off[:5]}")
    else:
        raise ValueError(f"unknown station dataset {dataset!r}")
    return list(stations)


def _own_stations(stations: Sequence[StationRecord]) -> dict[str, list[StationRecord]]:
    own = defaultdict(list)
    for s in stations:
        if s.fips:
            own[s.fips].append(s)
    return own


def _own_value(fips: str, group: Sequence[StationRecord]) -> CountySlr:
    return CountySlr(
        fips,
        float(np.mean([s.trend for s in group])),
        float(np.mean([s.ci_halfwidth for s in group])),
        OWN,
    )


def _prepare(stations):
    if not stations:
        raise ValueError("no stations available for a coastal county")
    order = sorted(stations, key=lambda s: s.station_id)
    xy = np.array([s.location for s in order], dtype=float)
    trend = np.array([s.trend for s in order])
    ci = np.array([s.ci_halfwidth for s in order])
    return order, xy, trend, ci


def extrapolate_nearest(
    stations: Sequence[StationRecord], counties: Iterable[_County]
) -> dict[str, CountySlr]:
    """Own-station mean, else the Euclidean-nearest station, else zero inland.

    Distance ties go to the lowest ``station_id``.
    """
    own = _own_stations(stations)
    out = {}
    prepared = None
    for c in counties:
        if not c.is_coastal:
            out[c.fips_id] = CountySlr(c.fips_id, 0.0, 0.0, INLAND)
        elif c.fips_id in own:
            out[c.fips_id] = _own_value(c.fips_id, own[c.fips_id])
        else:
            if prepared is None:
                prepared = _prepare(stations)
            order, xy, trend, ci = prepared
            d = np.hypot(xy[:, 0] - c.x_km, xy[:, 1] - c.y_km)
            # sorted by id, so argmin returns the lowest id among exact ties
            i = int(np.argmin(d))
            out[c.fips_id] = CountySlr(c.fips_id, float(trend[i]), float(ci[i]), NEAREST)
    return out


def extrapolate_idw(
    stations: Sequence[StationRecord], counties: Iterable[_County]
) -> dict[str, CountySlr]:
    """Inverse-distance weighted average over all stations for coastal
    counties without a station of their own.

    A county whose centroid coincides with one or more stations takes their
    mean, as if it hosted them.
    """
    own = _own_stations(stations)
    out = {}
    prepared = None
    for c in counties:
        if not c.is_coastal:
            out[c.fips_id] = CountySlr(c.fips_id, 0.0, 0.0, INLAND)
        elif c.fips_id in own:
            out[c.fips_id] = _own_value(c.fips_id, own[c.fips_id])
        else:
            if prepared is None:
                prepared = _prepare(stations)
            order, xy, trend, ci = prepared
            d = np.hypot(xy[:, 0] - c.x_km, xy[:, 1] - c.y_km)
            at = d == 0
            if at.any():
                out[c.fips_id] = _own_value(c.fips_id, [s for s, z in zip(order, at) if z])
                continue
            # scaled by the nearest distance so tiny d cannot overflow
            w = d.min() / d
            out[c.fips_id] = CountySlr(
                c.fips_id, float(w @ trend / w.sum()), float(w @ ci / w.sum()), IDW
            )
    return out


def extrapolate(stations, counties, mode: str = "nearest") -> dict[str, CountySlr]:
    if mode == "nearest":
        return extrapolate_nearest(stations, counties)
    if mode == "idw":
        return extrapolate_idw(stations, counties)
    raise ValueError(f"unknown extrapolation mode {mode!r}")


def treated_set(
    county_slr: Mapping[str, CountySlr],
    threshold: float,
    full_width: bool = False,
) -> Partition:
    """Split counties into treated, controls and excluded.

    Treated: coastal counties whose trend minus its CI half-width (or the full
    CI width when ``full_width``) exceeds ``threshold``. Controls: every
    inland county and every coastal county with a negative trend. The rest
    of the coastal counties are excluded.
    """
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    mult = 2.0 if full_width else 1.0
    treated, controls, excluded = set(), set(), set()
    for fips, c in county_slr.items():
        if not c.is_coastal:
            controls.add(fips)
        elif c.slr - mult * c.ci_halfwidth > threshold:
            treated.add(fips)
        elif c.slr < 0:
            controls.add(fips)
        else:
            excluded.add(fips)
    return Partition(frozenset(treated), frozenset(controls), frozenset(excluded))


def coastal_quantile(county_slr: Mapping[str, CountySlr], q: float = 0.10) -> float:
    """Nearest-rank ``q``-quantile of the coastal counties' trends."""
    vals = [c.slr for c in county_slr.values() if c.is_coastal]
    if not vals:
        raise ValueError("no coastal counties")
    return nearest_rank_percentile(vals, q)
