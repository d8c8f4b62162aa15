"""
County panel: loading, validation, growth rates, descriptives and trimming.

Numeric cells are never silently coerced. Every field of a
:class:`CountyRecord` carries an explicit :class:`FieldStatus`; anything that
is not ``PRESENT`` is stored as ``nan`` and excluded by :func:`complete_cases`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "REGIONS",
    "OMITTED_REGION",
    "INCOME_YEARS",
    "FieldStatus",
    "CountyRecord",
    "GrowthPanel",
    "DescriptiveStats",
    "SchemaError",
    "DuplicateKeyError",
    "DEFAULT_SCHEMA",
    "MODEL_FIELDS",
    "load_counties",
    "complete_cases",
    "growth_rate",
    "log_income",
    "build_panel",
    "religious_diversity",
    "to_frame",
    "descriptive_stats",
    "nearest_rank_percentile",
    "outlier_filter",
]

REGIONS = (
    "NewEngland",
    "Mideast",
    "GreatLakes",
    "Plains",
    "Southeast",
    "Southwest",
    "RockyMountain",
    "FarWest",
)
OMITTED_REGION = "FarWest"
INCOME_YEARS = (1980, 1990) + tuple(range(2000, 2013))
BASE_YEAR = 1990

PERCENT_FIELDS = (
    "catholics_pct",
    "evangelical_pct",
    "mainline_pct",
    "education_pct",
    "nonwhites_pct",
    "adherents_pct_1980",
)
DUMMY_FIELDS = ("urban", "rural", "highway", "right_to_work")
NONNEG_FIELDS = (
    "coast_distance",
    "gov_expenditure_pc",
    "tax_income_pc",
    "population_density",
    "population_density_1980",
)
UNIT_FIELDS = ("religious_diversity",)
FREE_FIELDS = ("x_km", "y_km", "amenities")

NUMERIC_FIELDS = (
    FREE_FIELDS + NONNEG_FIELDS + PERCENT_FIELDS + DUMMY_FIELDS + UNIT_FIELDS
)

# field -> csv header
DEFAULT_SCHEMA: dict[str, str] = {
    "fips_id": "fips",
    "x_km": "x_km",
    "y_km": "y_km",
    "is_coastal": "is_coastal",
    "coast_distance": "coast_distance_km",
    "gov_expenditure_pc": "gov_expenditure_pc",
    "tax_income_pc": "tax_income_pc",
    "population_density": "population_density",
    "urban": "urban",
    "rural": "rural",
    "catholics_pct": "catholics_pct",
    "evangelical_pct": "evangelical_pct",
    "mainline_pct": "mainline_pct",
    "religious_diversity": "religious_diversity",
    "education_pct": "education_pct",
    "nonwhites_pct": "nonwhites_pct",
    "highway": "highway",
    "right_to_work": "right_to_work",
    "amenities": "amenities",
    "region": "region",
    "adherents_pct_1980": "adherents_pct_1980",
    "population_density_1980": "population_density_1980",
    **{f"income_{year}": f"income_{year}" for year in INCOME_YEARS},
}
OPTIONAL_COLUMNS = ("state",)

# Everything the growth models consume; a record missing any of these is
# not a complete case.
MODEL_FIELDS = tuple(k for k in DEFAULT_SCHEMA if k != "fips_id")


class SchemaError(ValueError):
    """Raised when a CSV header lacks mandatory columns."""


class DuplicateKeyError(ValueError):
    """Raised when two rows share a FIPS id."""


class FieldStatus(enum.Enum):
    PRESENT = "present"
    MISSING = "missing"
    INVALID = "invalid"


@dataclass(frozen=True)
class CountyRecord:
    """One county's covariates, incomes and geography.

    Numeric fields hold ``nan`` whenever their status is not ``PRESENT``.
    ``status`` only lists the fields that are missing or invalid.
    """

    fips_id: str
    x_km: float
    y_km: float
    is_coastal: bool
    coast_distance: float
    income_by_year: Mapping[int, float]
    gov_expenditure_pc: float
    tax_income_pc: float
    population_density: float
    urban: float
    rural: float
    catholics_pct: float
    evangelical_pct: float
    mainline_pct: float
    religious_diversity: float
    education_pct: float
    nonwhites_pct: float
    highway: float
    right_to_work: float
    amenities: float
    region: str | None
    adherents_pct_1980: float
    population_density_1980: float
    state: str = ""
    extras: Mapping[str, float] = field(default_factory=dict)
    status: Mapping[str, FieldStatus] = field(default_factory=dict)

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.x_km, self.y_km)

    def field_status(self, name: str) -> FieldStatus:
        return self.status.get(name, FieldStatus.PRESENT)

    def is_complete(self, fields: Iterable[str] = MODEL_FIELDS) -> bool:
        return all(self.field_status(f) is FieldStatus.PRESENT for f in fields)

    def income(self, year: int) -> float:
        return self.income_by_year.get(year, math.nan)

    def region_dummies(self) -> dict[str, float]:
        """Region indicators with Far West omitted."""
        return {r: float(self.region == r) for r in REGIONS if r != OMITTED_REGION}


def _parse_float(text: str | None) -> tuple[float, FieldStatus]:
    if text is None or text.strip() == "":
        return math.nan, FieldStatus.MISSING
    try:
        value = float(text)
    except ValueError:
        return math.nan, FieldStatus.INVALID
    if not math.isfinite(value):
        return math.nan, FieldStatus.INVALID
    return value, FieldStatus.PRESENT


def _check_range(name: str, value: float) -> bool:
    if name in PERCENT_FIELDS:
        return 0.0 <= value <= 100.0
    if name in DUMMY_FIELDS:
        return value in (0.0, 1.0)
    if name in NONNEG_FIELDS:
        return value >= 0.0
    if name in UNIT_FIELDS:
        return 0.0 <= value <= 1.0
    if name.startswith("income_"):
        return value > 0.0
    return True


def _parse_row(row: Mapping[str, str], schema: Mapping[str, str], extra: Sequence[str]):
    status: dict[str, FieldStatus] = {}
    values: dict[str, float] = {}

    def numeric(name: str) -> float:
        value, st = _parse_float(row.get(schema[name]))
        if st is FieldStatus.PRESENT and not _check_range(name, value):
            value, st = math.nan, FieldStatus.INVALID
        if st is not FieldStatus.PRESENT:
            status[name] = st
        return value

    for name in NUMERIC_FIELDS:
        values[name] = numeric(name)
    incomes = {year: numeric(f"income_{year}") for year in INCOME_YEARS}

    coastal_text = (row.get(schema["is_coastal"]) or "").strip().lower()
    if coastal_text in ("1", "true", "yes"):
        is_coastal = True
    elif coastal_text in ("0", "false", "no"):
        is_coastal = False
    else:
        is_coastal = False
        status["is_coastal"] = (
            FieldStatus.MISSING if coastal_text == "" else FieldStatus.INVALID
        )

    region_text = (row.get(schema["region"]) or "").strip()
    region: str | None = region_text
    if region_text not in REGIONS:
        region = None
        status["region"] = (
            FieldStatus.MISSING if region_text == "" else FieldStatus.INVALID
        )

    extras = {}
    for col in extra:
        value, st = _parse_float(row.get(col))
        extras[col] = value
        if st is not FieldStatus.PRESENT:
            status[col] = st

    return CountyRecord(
        fips_id=row[schema["fips_id"]].strip(),
        is_coastal=is_coastal,
        income_by_year=incomes,
        region=region,
        state=(row.get("state") or "").strip(),
        extras=extras,
        status=status,
        **values,
    )


def load_counties(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
) -> list[CountyRecord]:
    """Parse ``counties.csv`` into records.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row, one row per county.
    schema : mapping, optional
        Field name to column header. Defaults to :data:`DEFAULT_SCHEMA`.
        Columns that are neither in the schema nor optional (``state``) are
        kept as numeric ``extras`` so that alternative government-finance
        variables can ride along.

    Raises
    ------
    SchemaError
        If a mandatory column is absent from the header.
    DuplicateKeyError
        If a FIPS id occurs twice.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in schema.values() if col not in header]
        if missing:
            raise SchemaError(f"missing mandatory columns: {', '.join(missing)}")
        known = set(schema.values()) | set(OPTIONAL_COLUMNS)
        extra = [col for col in header if col not in known]

        records: list[CountyRecord] = []
        seen: set[str] = set()
        for row in reader:
            rec = _parse_row(row, schema, extra)
            if rec.fips_id in seen:
                raise DuplicateKeyError(f"duplicate fips id {rec.fips_id!r}")
            seen.add(rec.fips_id)
            records.append(rec)
    return records


def complete_cases(
    records: Sequence[CountyRecord], fields: Iterable[str] = MODEL_FIELDS
) -> list[CountyRecord]:
    """Records with every field in ``fields`` present (order preserved)."""
    fields = tuple(fields)
    return [r for r in records if r.is_complete(fields)]


def log_income(income):
    """Natural log of per-capita income; non-positive income is a domain error."""
    income = np.asarray(income, dtype=float)
    if np.any(~(income > 0)):
        raise ValueError("income must be strictly positive before taking logs")
    return np.log(income)


def growth_rate(y0, yT, T):
    """Average annual growth ``(yT - y0) / T`` of log income."""
    if not T >= 1:
        raise ValueError(f"period length must be at least one year, got {T}")
    return (np.asarray(yT, dtype=float) - np.asarray(y0, dtype=float)) / T


@dataclass(frozen=True)
class GrowthPanel:
    """Growth rates over ``period`` for complete records, aligned by position."""

    records: tuple[CountyRecord, ...]
    period: tuple[int, int]
    g: np.ndarray
    y0: np.ndarray

    @property
    def fips(self) -> tuple[str, ...]:
        return tuple(r.fips_id for r in self.records)

    @property
    def T(self) -> int:
        return self.period[1] - self.period[0]

    def g_by_fips(self) -> dict[str, float]:
        return dict(zip(self.fips, self.g.tolist()))


def build_panel(
    records: Sequence[CountyRecord], end_year: int, start_year: int = BASE_YEAR
) -> GrowthPanel:
    """Growth panel for ``start_year -> end_year``.

    Only counties with both endpoint incomes present enter the panel.
    """
    if start_year != BASE_YEAR:
        raise ValueError(f"growth periods start in {BASE_YEAR}")
    if not 2000 <= end_year <= 2012:
        raise ValueError(f"end year must lie in 2000..2012, got {end_year}")
    keep = [
        r
        for r in records
        if r.field_status(f"income_{start_year}") is FieldStatus.PRESENT
        and r.field_status(f"income_{end_year}") is FieldStatus.PRESENT
    ]
    y0 = log_income([r.income(start_year) for r in keep])
    yT = log_income([r.income(end_year) for r in keep])
    return GrowthPanel(
        records=tuple(keep),
        period=(start_year, end_year),
        g=growth_rate(y0, yT, end_year - start_year),
        y0=y0,
    )


def religious_diversity(shares) -> float:
    """Diversity index ``1 - sum(share_i ** 2)`` over denomination shares."""
    shares = np.asarray(shares, dtype=float)
    if shares.size == 0:
        raise ValueError("at least one denomination share is required")
    if np.any((shares < 0) | (shares > 1)) or not np.all(np.isfinite(shares)):
        raise ValueError("denomination shares must lie in [0, 1]")
    return float(1.0 - np.sum(shares**2))


def to_frame(records: Sequence[CountyRecord]) -> pd.DataFrame:
    """Tabular view of records indexed by FIPS id (incomes as ``income_YYYY``)."""
    rows = []
    for r in records:
        row = {name: getattr(r, name) for name in NUMERIC_FIELDS}
        row.update({f"income_{y}": r.income(y) for y in INCOME_YEARS})
        row.update(r.region_dummies())
        row.update(r.extras)
        row["fips"] = r.fips_id
        row["is_coastal"] = r.is_coastal
        row["region"] = r.region
        row["state"] = r.state
        rows.append(row)
    return pd.DataFrame(rows).set_index("fips")


@dataclass(frozen=True)
class DescriptiveStats:
    """Per-variable mean, sample sd (ddof=1) and n over one subsample."""

    mean: dict[str, float]
    sd: dict[str, float]
    n: int

    def to_tsv(self) -> str:
        lines = ["variable\tmean\tsd\tn"]
        for name in self.mean:
            lines.append(f"{name}\t{self.mean[name]:.6g}\t{self.sd[name]:.6g}\t{self.n}")
        return "\n".join(lines) + "\n"


def descriptive_stats(
    frame: pd.DataFrame,
    variables: Sequence[str],
    subsample: np.ndarray | Callable[[pd.DataFrame], np.ndarray] | None = None,
) -> DescriptiveStats:
    """Unweighted mean and sd with an ``n - 1`` denominator.

    ``subsample`` is a boolean mask or a callable returning one.
    """
    if subsample is not None:
        mask = subsample(frame) if callable(subsample) else subsample
        frame = frame.loc[np.asarray(mask, dtype=bool)]
    if len(frame) == 0:
        raise ValueError("descriptive statistics of an empty subsample")
    means, sds = {}, {}
    for name in variables:
        values = frame[name].to_numpy(dtype=float)
        if np.isnan(values).any():
            raise ValueError(f"variable {name!r} has missing values in the subsample")
        means[name] = float(values.mean())
        sds[name] = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return DescriptiveStats(mean=means, sd=sds, n=len(frame))


def nearest_rank_percentile(values, q: float) -> float:
    """Inclusive nearest-rank ``q``-quantile (``q`` in [0, 1]).

    The value at 1-based rank ``ceil(q * n)`` of the sorted sample, with
    ``q = 0`` mapping to the minimum.
    """
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level must lie in [0, 1], got {q}")
    # guard against q*n landing a hair above an integer
    rank = max(1, math.ceil(round(q * values.size, 9)))
    return float(values[rank - 1])


def outlier_filter(
    frame: pd.DataFrame,
    variables: Sequence[str] = ("slr", "g"),
    tails: Mapping[str, str] | None = None,
) -> pd.DataFrame:
    """Drop rows at or beyond the 5th/95th nearest-rank percentile of any variable.

    Parameters
    ----------
    frame : DataFrame
    variables : sequence of str
        Columns screened for outliers.
    tails : mapping, optional
        Per-variable ``"both"`` (default), ``"upper"`` or ``"lower"``. A
        one-sided screen is needed for variables with a point mass at one end
        of their support, e.g. sea-level rise which is zero for every inland
        county: its 5th percentile is that zero, and the inclusive lower rule
        would discard the whole inland sample.
    """
    tails = dict(tails or {})
    keep = np.ones(len(frame), dtype=bool)
    for name in variables:
        side = tails.get(name, "both")
        if side not in ("both", "upper", "lower"):
            raise ValueError(f"unknown tail {side!r} for {name!r}")
        values = frame[name].to_numpy(dtype=float)
        if side in ("both", "lower"):
            keep &= values > nearest_rank_percentile(values, 0.05)
        if side in ("both", "upper"):
            keep &= values < nearest_rank_percentile(values, 0.95)
    return frame.loc[keep]
