"""
Synthetic county study used by the pipeline tests and the CLI demo.

The geography is a 48 x 64 grid of 50 km cells (3072 counties). The west,
south and east edges face the sea; the north edge is a land border. States
are 8 x 8 blocks of cells and regions are groups of states. Incomes follow a
two-decade convergence process whose structural residual is a spatial
autoregression on the county contiguity graph, so every estimator in the
package has a known target on these data.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.sparse import identity
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .dataset import DEFAULT_SCHEMA, INCOME_YEARS, nearest_rank_percentile
from .design import build_design
from .slr import StationRecord, extrapolate_nearest
from .weights import build_weights

__all__ = ["FixtureSpec", "Fixture", "make_fixture", "write_fixture", "PERIOD_MEAN_GROWTH"]

ROWS, COLS, CELL_KM = 48, 64, 50.0
STATE_CELLS = 8
N_STATE_COLS = COLS // STATE_CELLS

# target cross-county mean growth for 1990 -> T
PERIOD_MEAN_GROWTH = {
    2012: 0.0413, 2011: 0.0415, 2010: 0.0402, 2009: 0.0408, 2008: 0.0443,
    2007: 0.0435, 2006: 0.0423, 2005: 0.0427, 2004: 0.0429, 2003: 0.0425,
    2002: 0.0418, 2001: 0.0453, 2000: 0.0439,
}

# true effects on structural growth, per model unit (see design.py)
SLR_EFFECTS = {  # period -> (slr, slr2)
    2012: (0.594, -44.4), 2011: (0.35, 10.0), 2010: (0.45, -20.0), 2009: (0.9, -90.0),
    2008: (-0.35, 20.0), 2007: (-0.25, 15.0), 2006: (0.9, -90.0), 2005: (1.0, -100.0),
    2004: (1.0, -100.0), 2003: (0.35, -20.0), 2002: (1.0, -100.0), 2001: (1.0, -100.0),
    2000: (1.0, -100.0),
}
CONTROL_EFFECTS = {
    "coast": -0.004, "coast2": 0.002,
    "gov_expenditure_pc": -0.0006, "tax_income_pc": 0.004,
    "popdens": 0.02, "urban": 0.001, "rural": 0.0005,
    "catholics": 5e-5, "evangelical": 3e-5, "mainline": 4e-5, "reldiv": 0.004,
    "education": 2.5e-4, "highway": -2e-4, "right_to_work": 0.001,
    "nonwhites": -8e-5, "amenities": -2e-4,
    "NewEngland": -0.003, "Mideast": -0.004, "GreatLakes": -0.005, "Plains": -0.002,
    "Southeast": -0.003, "Southwest": -0.001, "RockyMountain": 0.001,
}

# state block (row, col) -> region; rows count from the south
_REGION_BLOCKS = {
    "FarWest": [(r, c) for r in range(6) for c in (0, 1)],
    "Southwest": [(0, 2), (0, 3), (1, 2), (1, 3)],
    "RockyMountain": [(r, 2) for r in range(2, 6)],
    "Plains": [(r, c) for r in range(2, 6) for c in (3, 4)],
    "GreatLakes": [(3, 5), (4, 5), (5, 5)],
    "Southeast": [(r, c) for r in range(3) for c in (4, 5, 6, 7)] + [(3, 6), (3, 7)],
    "Mideast": [(4, 6), (4, 7), (5, 6)],
    "NewEngland": [(5, 7)],
}
_REGION_OF_BLOCK = {b: reg for reg, blocks in _REGION_BLOCKS.items() for b in blocks}

ISLAND_CELLS = ((0, 20), (0, 41), (30, 63))
# (row, col, field) left empty to make incomplete records
INCOMPLETE_CELLS = (
    (10, 10, "amenities"), (12, 30, "income_1980"), (20, 20, "education_pct"),
    (25, 45, "income_2012"), (30, 15, "population_density_1980"), (35, 35, "tax_income_pc"),
    (40, 25, "income_1990"), (18, 50, "catholics_pct"), (44, 55, "gov_expenditure_pc"),
)
# four nested groups of states with depleted aquifers (config data)
DEPLETION_GROUPS = (
    ("S09", "S10"),
    ("S17", "S18"),
    ("S02", "S03", "S11"),
    ("S19", "S26"),
)
FINANCE_VARIANTS = {
    "exp_taxes": ("gov_expenditure_pc", "tax_income_pc"),
    "exp_intergov": ("gov_expenditure_pc", "intergov_total_pc"),
    "exp_intergov_state": ("gov_expenditure_pc", "intergov_state_pc"),
    "taxes": ("tax_income_pc",),
    "intergov": ("intergov_total_pc",),
    "intergov_state": ("intergov_state_pc",),
    "property_taxes": ("property_taxes_pc",),
    "none": (),
}


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 20160101
    rho: float = 0.458
    beta: float = -0.0333
    sigma: float = 0.0036
    sigma_perm: float = 0.0032
    instrument_strength: float = 0.06
    station_mean: float = 2.764
    station_sd: float = 1.768
    coastal_q10: float = 1.8


@dataclass
class Fixture:
    counties: pd.DataFrame
    adjacency: list[tuple[str, str]]
    island_links: list[tuple[str, str]]
    stations: list[StationRecord]
    stations_window: list[StationRecord]
    coast_order: list[str]
    spec: FixtureSpec


def _cell_id(r: int, c: int) -> tuple[str, str]:
    sr, sc = r // STATE_CELLS, c // STATE_CELLS
    state = sr * N_STATE_COLS + sc + 1
    local = (r % STATE_CELLS) * STATE_CELLS + (c % STATE_CELLS) + 1
    return f"S{state:02d}", f"{state:02d}{2 * local - 1:03d}"


def _coastal_cells() -> list[tuple[int, int]]:
    cells = set()
    for r in range(ROWS):
        cells.update({(r, 0), (r, COLS - 1)})
    for c in range(COLS):
        cells.add((0, c))
    cells.update((1, c) for c in range(1, COLS - 1))
    cells.update((r, COLS - 2) for r in range(1, ROWS))
    cells.update((r, 1) for r in range(40, ROWS))
    return sorted(cells)


def _coast_order(cells) -> list[tuple[int, int]]:
    """West coast north to south, then the south coast west to east, then the
    east coast south to north."""
    west = [rc for rc in cells if rc[1] <= 1 and rc[0] >= 2]
    south = [rc for rc in cells if rc[0] <= 1 and rc not in west and rc[1] < COLS - 2]
    east = [rc for rc in cells if rc not in west and rc not in south]
    west.sort(key=lambda rc: (-rc[0], rc[1]))
    south.sort(key=lambda rc: (rc[1], rc[0]))
    east.sort(key=lambda rc: (rc[0], -rc[1]))
    return west + south + east


def _coast_position(r: int, c: int) -> tuple[str, float]:
    """Coast segment and position in [0, 1] along it."""
    if c <= 1 and r >= 2:
        return "west", (ROWS - 1 - r) / (ROWS - 3)
    if r <= 1 and c < COLS - 2:
        return "south", c / (COLS - 3)
    return "east", r / (ROWS - 1)


def _raw_station_trend(segment: str, s: float, rng) -> float:
    if segment == "west":
        base = -0.6 + 2.0 * s if s < 0.12 else 1.4 + 0.6 * s
    elif segment == "south":
        base = 3.0 + (6.5 if 0.35 < s < 0.5 else 0.0) + 0.5 * s
    else:
        base = 3.4 - 1.2 * s
    return base + rng.normal(0.0, 0.45)


def _stations(rng, coast_cells, fips_of, spec: FixtureSpec):
    hosts = [rc for rc in coast_cells if (rc[0] == 0 or rc[1] in (0, COLS - 1)) and rc not in ISLAND_CELLS]
    pick = sorted(rng.choice(len(hosts), size=86, replace=False))
    hosts = [hosts[i] for i in pick]
    doubles = set(rng.choice(86, size=8, replace=False).tolist())
    raw, rows = [], []
    for k, (r, c) in enumerate(hosts):
        seg, s = _coast_position(r, c)
        for rep in range(2 if k in doubles else 1):
            cx, cy = (c + 0.5) * CELL_KM, (r + 0.5) * CELL_KM
            if seg == "west":
                x, y = cx - 20.0, cy + rng.uniform(-20, 20)
            elif seg == "south":
                x, y = cx + rng.uniform(-20, 20), cy - 20.0
            else:
                x, y = cx + 20.0, cy + rng.uniform(-20, 20)
            first = int(rng.integers(1900, 1978))
            last = int(rng.choice([2007, 2008, 2010, 2012], p=[0.7, 0.1, 0.1, 0.1]))
            raw.append(_raw_station_trend(seg, s, rng))
            rows.append((fips_of[(r, c)], x, y, first, last))
    raw = np.asarray(raw)
    trend = spec.station_mean + spec.station_sd * (raw - raw.mean()) / raw.std(ddof=1)
    stations = []
    for i, ((fips, x, y, first, last), t) in enumerate(zip(rows, trend)):
        span = last - first
        ci = round(0.1 + 30.0 / span + abs(rng.normal(0, 0.05)), 2)
        stations.append(
            StationRecord(f"ST{i + 1:03d}", round(x, 3), round(y, 3), round(float(t), 4), ci, first, last, fips)
        )
    return stations


def _window_stations(rng, stations):
    """A subset covering exactly 1979-2007 with noisier short-window trends."""
    hosts = sorted({s.fips for s in stations})
    keep_hosts = set(hosts[i] for i in rng.choice(len(hosts), size=57, replace=False))
    out = []
    for s in stations:
        if s.fips in keep_hosts:
            t = s.trend + rng.normal(0.0, 0.6)
            out.append(
                StationRecord(s.station_id, s.x_km, s.y_km, round(float(t), 4),
                              round(s.ci_halfwidth + 0.35, 2), 1979, 2007, s.fips)
            )
    return out


class _Coastal:
    __slots__ = ("fips_id", "x_km", "y_km", "is_coastal")

    def __init__(self, fips_id, x, y, coastal):
        self.fips_id, self.x_km, self.y_km, self.is_coastal = fips_id, x, y, coastal


def _calibrate_q10(stations, county_objs, target):
    """Adjust trends so the coastal 10% quantile equals ``target`` while
    keeping the station mean and sd.

    The station set feeding each coastal county does not depend on the trend
    values, so it is resolved once. A grid search over a shift of the low
    positive trends gets close; a root search on the stations behind the
    county at the quantile rank then makes it exact.
    """
    by_fips = {}
    for i, s in enumerate(stations):
        by_fips.setdefault(s.fips, []).append(i)
    probe = [
        StationRecord(s.station_id, s.x_km, s.y_km, float(i), 0.0, s.first_year, s.last_year, s.fips)
        for i, s in enumerate(stations)
    ]
    members = [
        by_fips.get(fid, [int(round(c.slr))])
        for fid, c in extrapolate_nearest(probe, county_objs).items()
        if c.is_coastal
    ]
    raw = np.array([s.trend for s in stations])
    m, sd = raw.mean(), raw.std(ddof=1)

    def normalize(t):
        return m + sd * (t - t.mean()) / t.std(ddof=1)

    def county_values(t):
        return np.array([t[idx].mean() for idx in members])

    low = (raw > 0) & (raw < np.quantile(raw, 0.3))
    shifts = np.linspace(-1.5, 1.5, 601)
    gaps = [abs(nearest_rank_percentile(county_values(normalize(raw + d * low)), 0.10) - target)
            for d in shifts]
    t = raw + shifts[int(np.argmin(gaps))] * low
    vals = county_values(normalize(t))
    rank = max(1, int(np.ceil(round(0.10 * len(vals), 9))))
    k = int(np.argsort(vals, kind="stable")[rank - 1])
    bump = np.zeros_like(t)
    bump[members[k]] = 1.0

    def gap(e):
        return county_values(normalize(t + e * bump))[k] - target

    e = brentq(gap, -1.0, 1.0, xtol=1e-14) if gap(-1.0) * gap(1.0) < 0 else 0.0
    final = normalize(t + e * bump)
    return [
        StationRecord(s.station_id, s.x_km, s.y_km, float(v), s.ci_halfwidth,
                      s.first_year, s.last_year, s.fips)
        for s, v in zip(stations, final)
    ]


def make_fixture(spec: FixtureSpec = FixtureSpec()) -> Fixture:
    """Generate the synthetic county study (deterministic in ``spec.seed``)."""
    rng = np.random.default_rng(spec.seed)
    cells = [(r, c) for r in range(ROWS) for c in range(COLS)]
    state_of, fips_of = {}, {}
    for rc in cells:
        state_of[rc], fips_of[rc] = _cell_id(*rc)
    coast_cells = _coastal_cells()
    coastal = set(coast_cells)

    # geography
    n = len(cells)
    fips = [fips_of[rc] for rc in cells]
    r_idx = np.array([rc[0] for rc in cells])
    c_idx = np.array([rc[1] for rc in cells])
    x = (c_idx + 0.5) * CELL_KM
    y = (r_idx + 0.5) * CELL_KM
    dist = np.minimum.reduce([x, y, COLS * CELL_KM - x])
    is_coastal = np.array([rc in coastal for rc in cells])
    region = [_REGION_OF_BLOCK[(rc[0] // STATE_CELLS, rc[1] // STATE_CELLS)] for rc in cells]
    region_arr = np.array(region)

    adjacency, islands = [], []
    island_set = set(ISLAND_CELLS)
    for r, c in cells:
        for dr, dc in ((0, 1), (1, 0)):
            r2, c2 = r + dr, c + dc
            if r2 < ROWS and c2 < COLS and (r, c) not in island_set and (r2, c2) not in island_set:
                adjacency.append((fips_of[(r, c)], fips_of[(r2, c2)]))
    for r, c in ISLAND_CELLS:
        nbrs = [(r, c - 1), (r, c + 1)] if r == 0 else [(r - 1, c), (r + 1, c)]
        islands += [(fips_of[(r, c)], fips_of[nb]) for nb in nbrs]

    # covariates
    coast_shift = is_coastal.astype(float)
    east = (x / (COLS * CELL_KM))
    log_pd = 3.3 + 0.9 * coast_shift + 0.5 * east + rng.normal(0, 1.0, n)
    pd_now = np.exp(log_pd)
    pd_80 = pd_now * np.exp(rng.normal(-0.08, 0.12, n))
    urban = (pd_now > 250).astype(float)
    rural = (pd_now < 15).astype(float)
    cath_base = np.where(np.isin(region_arr, ["NewEngland", "Mideast", "GreatLakes"]), 3.0, 1.2)
    evan_base = np.where(np.isin(region_arr, ["Southeast", "Southwest", "Plains"]), 3.5, 1.2)
    alpha = np.column_stack([cath_base, evan_base, np.full(n, 1.5), np.full(n, 0.8)])
    shares = np.array([rng.dirichlet(a) for a in alpha])
    adherence = np.clip(rng.normal(52, 12, n), 10, 95)
    catholics, evangelical, mainline = (shares[:, :3] * adherence[:, None]).T
    adherents80 = np.clip(adherence + rng.normal(1.5, 4.0, n), 5, 100)
    reldiv = np.empty(n)
    for i in range(n):
        conc = rng.uniform(0.3, 3.0)
        reldiv[i] = 1.0 - np.sum(rng.dirichlet(np.full(133, conc / 20.0)) ** 2)
    education = np.clip(11 + 4.0 * coast_shift + 3.0 * urban + rng.normal(0, 5, n), 3, 60)
    nonwhite = np.clip(rng.beta(1.2, 6.0, n) * 100 + 5 * (region_arr == "Southeast"), 0, 99)
    highway = (rng.uniform(size=n) < 0.45).astype(float)
    state_list = sorted(set(state_of.values()))
    state_draw = dict(zip(state_list, rng.uniform(size=len(state_list))))
    rtw_states = {
        s for rc, s in state_of.items()
        if state_draw[s] < (0.75 if _REGION_OF_BLOCK[(rc[0] // 8, rc[1] // 8)]
                            in ("Southeast", "Southwest", "Plains", "RockyMountain") else 0.2)
    }
    rtw = np.array([float(state_of[rc] in rtw_states) for rc in cells])
    amenities = rng.normal(0, 2.0, n) + 2.0 * coast_shift + 0.5 * (region_arr == "FarWest")
    gov = np.exp(rng.normal(np.log(1000), 0.33, n)) * (1 + 0.15 * coast_shift)
    tax = np.exp(rng.normal(np.log(560), 0.55, n)) * (1 + 0.2 * coast_shift)
    intergov = gov * rng.uniform(0.3, 0.5, n)
    intergov_state = intergov * rng.uniform(0.7, 0.95, n)
    prop_tax = tax * rng.uniform(0.6, 0.85, n)

    frame = pd.DataFrame(
        {
            "coast_distance": dist, "population_density": pd_now, "urban": urban, "rural": rural,
            "catholics_pct": catholics, "evangelical_pct": evangelical, "mainline_pct": mainline,
            "religious_diversity": reldiv, "education_pct": education, "nonwhites_pct": nonwhite,
            "highway": highway, "right_to_work": rtw, "amenities": amenities,
            "gov_expenditure_pc": gov, "tax_income_pc": tax, "region": region,
        },
        index=pd.Index(fips, name="fips"),
    )

    # stations and county sea-level rise
    county_objs = [_Coastal(f, xi, yi, bool(ci)) for f, xi, yi, ci in zip(fips, x, y, is_coastal)]
    stations = _stations(rng, coast_cells, fips_of, spec)
    stations = _calibrate_q10(stations, county_objs, spec.coastal_q10)
    stations = [
        StationRecord(s.station_id, s.x_km, s.y_km, round(s.trend, 4), s.ci_halfwidth,
                      s.first_year, s.last_year, s.fips)
        for s in stations
    ]
    window = _window_stations(rng, stations)
    slr = {k: v.slr for k, v in extrapolate_nearest(stations, county_objs).items()}

    # incomes
    W = build_weights(fips, adjacency, islands)
    lu = splu((identity(n, format="csc") - spec.rho * W.sparse).tocsc())
    design = build_design(frame, slr, drop_constant=False)
    base = np.zeros(n)
    for name, b in CONTROL_EFFECTS.items():
        base += b * design.column(name)
    z_adh = (adherents80 - adherents80.mean()) / adherents80.std()
    z_pd = (np.log(pd_80) - np.log(pd_80).mean()) / np.log(pd_80).std()
    smooth = lu.solve(rng.normal(0, 0.08, n))
    y1980 = 9.2 + spec.instrument_strength * (z_adh - 0.6 * z_pd) + smooth
    eps_perm = rng.normal(0, spec.sigma_perm, n)

    def structural(slr_b, slr2_b, noise):
        return lu.solve(base + slr_b * design.column("slr") + slr2_b * design.column("slr2")
                        + eps_perm + noise)

    pi_prev = structural(*SLR_EFFECTS[2012], rng.normal(0, spec.sigma, n))
    pi_prev += 0.055 - (spec.beta * y1980 + pi_prev).mean()
    g_prev = spec.beta * y1980 + pi_prev
    y1990 = y1980 + 10.0 * g_prev

    logs = {1980: y1980, 1990: y1990}
    for T, target in PERIOD_MEAN_GROWTH.items():
        pi_T = structural(*SLR_EFFECTS[T], rng.normal(0, spec.sigma, n))
        g_T = spec.beta * y1990 + pi_T
        g_T += target - g_T.mean()
        logs[T] = y1990 + (T - 1990) * g_T

    out = pd.DataFrame(index=frame.index)
    out["state"] = [state_of[rc] for rc in cells]
    out["x_km"], out["y_km"] = x, y
    out["is_coastal"] = is_coastal.astype(int)
    out["coast_distance_km"] = dist
    for col in frame.columns:
        if col != "coast_distance":
            out[col] = frame[col]
    out["adherents_pct_1980"] = adherents80
    out["population_density_1980"] = pd_80
    for year in INCOME_YEARS:
        out[f"income_{year}"] = np.round(np.exp(logs[year]), 2)
    out["intergov_total_pc"] = intergov
    out["intergov_state_pc"] = intergov_state
    out["property_taxes_pc"] = prop_tax
    for col in out.columns:
        if out[col].dtype.kind == "f" and not col.startswith("income_"):
            out[col] = out[col].round(6)
    out = out.astype(object)
    for r, c, field in INCOMPLETE_CELLS:
        out.loc[fips_of[(r, c)], DEFAULT_SCHEMA.get(field, field)] = ""

    order = [fips_of[rc] for rc in _coast_order(coast_cells)]
    return Fixture(out, adjacency, islands, stations, window, order, spec)


def _write_stations(path: Path, stations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "x_km", "y_km", "trend_mm_yr", "ci95_halfwidth_mm_yr",
                    "first_year", "last_year", "fips"])
        for s in stations:
            w.writerow([s.station_id, s.x_km, s.y_km, s.trend, s.ci_halfwidth,
                        s.first_year, s.last_year, s.fips])


def _write_pairs(path: Path, pairs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fips_a", "fips_b"])
        w.writerows(pairs)


def _toml_list(items) -> str:
    return "[" + ", ".join(f'"{i}"' for i in items) + "]"


def battery_toml(periods=tuple(range(2012, 1999, -1)), workers: int = 1) -> str:
    """A battery configuration for the files written by :func:`write_fixture`."""
    lines = [
        "[data]",
        'counties = "counties.csv"',
        'adjacency = "adjacency.csv"',
        'island_links = "island_links.csv"',
        'stations = "stations.csv"',
        'stations_window = "stations_window.csv"',
        'coast_order = "coast_order.csv"',
        "",
        "[battery]",
        "periods = [" + ", ".join(str(p) for p in periods) + "]",
        f"workers = {workers}",
        "seed = 2016",
        'output = "out"',
        "",
        "[depletion]",
        "groups = [" + ", ".join(_toml_list(g) for g in DEPLETION_GROUPS) + "]",
        "",
        "[finance]",
    ]
    for name, cols in FINANCE_VARIANTS.items():
        lines.append(f"{name} = {_toml_list(cols)}")
    lines += [
        "",
        "[matching]",
        "n_boot = 1000",
        "",
        "[[matching.specs]]",
        'ps_model = "logit"',
        "caliper = 0.035",
        "",
        "[[matching.specs]]",
        'ps_model = "probit"',
        "caliper = 0.035",
        "",
        "[[matching.specs]]",
        'ps_model = "probit"',
        "caliper = 0.020",
        'extra_squares = ["catholics"]',
        "",
    ]
    return "\n".join(lines)


def write_fixture(out_dir: str | Path, spec: FixtureSpec = FixtureSpec(), periods=None) -> dict:
    """Write the fixture files and a battery config into ``out_dir``.

    Returns a mapping from file role to path, plus SHA-256 digests.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fx = make_fixture(spec)
    paths = {
        "counties": out_dir / "counties.csv",
        "adjacency": out_dir / "adjacency.csv",
        "island_links": out_dir / "island_links.csv",
        "stations": out_dir / "stations.csv",
        "stations_window": out_dir / "stations_window.csv",
        "coast_order": out_dir / "coast_order.csv",
        "config": out_dir / "battery.toml",
    }
    fx.counties.reset_index().to_csv(paths["counties"], index=False, lineterminator="\n")
    _write_pairs(paths["adjacency"], fx.adjacency)
    _write_pairs(paths["island_links"], fx.island_links)
    _write_stations(paths["stations"], fx.stations)
    _write_stations(paths["stations_window"], fx.stations_window)
    states = fx.counties["state"].to_dict()
    with open(paths["coast_order"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["order", "fips", "state"])
        for i, f in enumerate(fx.coast_order, start=1):
            w.writerow([i, f, states[f]])
    kwargs = {} if periods is None else {"periods": tuple(periods)}
    paths["config"].write_text(battery_toml(**kwargs), encoding="utf-8")
    return {
        role: {"path": str(p), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
        for role, p in paths.items()
    }
