"""
The study as a batch: every period crossed with every robustness variant.

Inputs are loaded once into a :class:`StudyData`. Each (variant, period)
cell selects its sample, runs the three-stage convergence regression and
fits the requested model to the third-stage dependent variable. Cells are
independent; a failing cell is recorded and the battery carries on. Report
files are written in a fixed order with fixed number formats, so equal
inputs produce equal bytes whatever the thread count.
"""

from __future__ import annotations

import hashlib
import json
import platform
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .config import BatteryConfig, MatchSpec, VariantSpec
from .dataset import (
    complete_cases,
    descriptive_stats,
    growth_rate,
    load_counties,
    log_income,
    nearest_rank_percentile,
    outlier_filter,
    to_frame,
)
from .design import FOCUS_TERMS, Design, build_design
from .figure import figure_impacts
from .matching import MatchConfig, MatchResult, run_matching
from .regression import OlsFit, ThreeSlsFit, ols, stars, three_sls
from .slr import (
    CountySlr,
    coastal_quantile,
    extrapolate,
    load_stations,
    select_stations,
    treated_set,
)
from .spatial import (
    ImpactMeasures,
    LmReport,
    SpatialFit,
    fit_gs2sls_white,
    fit_sac,
    fit_sar,
    fit_sem,
    impacts,
    lm_residual_autocorr,
    lm_tests,
)
from .weights import ContiguityWeights, build_weights, morans_i, read_pairs

__all__ = [
    "StudyData",
    "load_study",
    "CellResult",
    "SignificanceCell",
    "BatteryReport",
    "run_cell",
    "run_battery",
    "sign_table",
    "write_report",
    "emit_manifest",
    "period_arrays",
]

INSTRUMENTS = ("adherents_1980", "popdens_1980")
PS_SQUARES = ("gov_expenditure_pc", "nonwhites", "amenities")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(eq=False)
class StudyData:
    """Complete-case counties, their contiguity operator and the stations.

    ``frame`` rows follow ``W.ids``.
    """

    frame: pd.DataFrame
    W: ContiguityWeights
    stations: dict
    coast_order: list[tuple[str, str]]
    n_records: int
    input_hashes: dict
    _slr: dict = field(default_factory=dict, repr=False)
    _weights: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def county_slr(self, extrapolation: str = "nearest", dataset: str = "full") -> dict[str, CountySlr]:
        key = (extrapolation, dataset)
        with self._lock:
            if key not in self._slr:
                counties = [_Site(f, r.x_km, r.y_km, bool(r.is_coastal)) for f, r in self.frame.iterrows()]
                self._slr[key] = extrapolate(self.stations[dataset], counties, extrapolation)
            return self._slr[key]

    def slr_mm(self, extrapolation: str = "nearest", dataset: str = "full") -> pd.Series:
        cs = self.county_slr(extrapolation, dataset)
        return pd.Series({f: cs[f].slr for f in self.frame.index})

    def weights_for(self, ids: Sequence[str]) -> ContiguityWeights:
        """Operator restricted to ``ids``; isolated units are dropped."""
        key = tuple(ids)
        if key == self.W.ids:
            return self.W
        with self._lock:
            if key not in self._weights:
                self._weights[key] = self.W.subset(key, drop_isolated=True)
            return self._weights[key]


class _Site:
    __slots__ = ("fips_id", "x_km", "y_km", "is_coastal")

    def __init__(self, fips_id, x, y, coastal):
        self.fips_id, self.x_km, self.y_km, self.is_coastal = fips_id, x, y, coastal


def load_study(data) -> StudyData:
    """Load counties, adjacency, islands, stations and the coastline order."""
    records = load_counties(data.counties)
    complete = complete_cases(records)
    ids_all = [r.fips_id for r in records]
    links = read_pairs(data.island_links) if data.island_links else []
    W_all = build_weights(ids_all, read_pairs(data.adjacency), links)
    W = W_all.subset([r.fips_id for r in complete], drop_isolated=True)
    frame = to_frame(complete).loc[list(W.ids)]

    stations = {"full": select_stations(load_stations(data.stations), "full")}
    if data.stations_window:
        stations["window1979_2007"] = select_stations(load_stations(data.stations_window), "window1979_2007")
    order = []
    if data.coast_order:
        co = pd.read_csv(data.coast_order, dtype=str).sort_values("order", key=lambda s: s.astype(int))
        order = [(f, s) for f, s in zip(co["fips"], co["state"]) if f in frame.index]
    hashes = {k: _sha256(p) for k, p in data.items()}
    return StudyData(frame, W, stations, order, len(records), hashes)


def period_arrays(frame: pd.DataFrame, end_year: int) -> dict[str, np.ndarray]:
    """Growth and log-income arrays for ``1990 -> end_year`` and 1980 -> 1990."""
    y80 = log_income(frame["income_1980"].to_numpy(float))
    y90 = log_income(frame["income_1990"].to_numpy(float))
    yT = log_income(frame[f"income_{end_year}"].to_numpy(float))
    return {
        "g": growth_rate(y90, yT, end_year - 1990),
        "y0": y90,
        "g_prev": growth_rate(y80, y90, 10),
        "y0_prev": y80,
    }


def _instruments(frame: pd.DataFrame) -> np.ndarray:
    return np.column_stack(
        [frame["adherents_pct_1980"].to_numpy(float), frame["population_density_1980"].to_numpy(float) * 1e-3]
    )


@dataclass(eq=False)
class CellResult:
    period: int
    variant: str
    model: str
    status: str
    error: str = ""
    n: int = 0
    dropped: tuple[str, ...] = ()
    tsls: ThreeSlsFit | None = None
    fit: SpatialFit | OlsFit | None = None
    design: Design | None = None
    W: ContiguityWeights | None = None
    seconds: float = 0.0

    def coefficients(self) -> list[dict]:
        if self.fit is None:
            return []
        rows = self.fit.table()
        return [{"name": r["name"], "estimate": r["estimate"], "se": r["se"], "p": r["p"]} for r in rows]

    def p_value(self, name: str) -> tuple[float, float] | None:
        for r in self.coefficients():
            if r["name"] == name:
                return r["estimate"], r["p"]
        return None


def _select(study: StudyData, variant: VariantSpec, groups, g: np.ndarray, slr: pd.Series) -> np.ndarray:
    frame = study.frame
    if variant.subsample == "all":
        return np.ones(len(frame), dtype=bool)
    if variant.subsample == "coastal":
        return frame["is_coastal"].to_numpy(bool)
    if variant.subsample == "near_coast":
        q1 = nearest_rank_percentile(frame["coast_distance"].to_numpy(float), 0.25)
        return frame["coast_distance"].to_numpy(float) <= q1
    if variant.subsample == "depletion":
        gone = {s for grp in groups[: variant.depletion_k] for s in grp}
        return ~frame["state"].isin(gone).to_numpy()
    if variant.subsample == "no_outliers":
        tmp = pd.DataFrame({"slr": slr.to_numpy(float), "g": g}, index=frame.index)
        # inland counties sit at zero sea-level rise, so only its upper tail is screened
        kept = outlier_filter(tmp, ("slr", "g"), tails={"g": "both", "slr": "upper"})
        return frame.index.isin(kept.index)
    raise ValueError(f"unknown subsample {variant.subsample!r}")


def run_cell(study: StudyData, variant: VariantSpec, period: int, groups=()) -> CellResult:
    """Fit one (variant, period) cell; failures are captured, not raised."""
    t0 = time.perf_counter()
    cell = CellResult(period=period, variant=variant.name, model=variant.model, status="ok")
    try:
        slr = study.slr_mm(variant.extrapolation, variant.slr_dataset)
        arr = period_arrays(study.frame, period)
        mask = _select(study, variant, groups, arr["g"], slr)
        ids = list(study.frame.index[mask])
        W = None
        if variant.model != "3sls":
            W = study.weights_for(ids)
            ids = list(W.ids)
        sub = study.frame.loc[ids]
        pos = study.frame.index.get_indexer(ids)
        design = build_design(sub, slr, variant.finance, include_coast=variant.subsample != "coastal")
        tsls = three_sls(
            arr["g"][pos], arr["y0"][pos], arr["g_prev"][pos], arr["y0_prev"][pos],
            _instruments(sub), design.X, period - 1990,
            names=design.names, instrument_names=INSTRUMENTS,
        )
        if variant.model == "3sls":
            fit = tsls.stage3
        elif variant.model == "sar":
            fit = fit_sar(tsls.pi, design.X, W, design.names)
        elif variant.model == "sem":
            fit = fit_sem(tsls.pi, design.X, W, design.names)
        elif variant.model == "sac":
            fit = fit_sac(tsls.pi, design.X, W, design.names)
        else:
            fit = fit_gs2sls_white(tsls.pi, design.X, W, design.names)
        cell.n, cell.dropped, cell.tsls, cell.fit, cell.design, cell.W = len(ids), design.dropped, tsls, fit, design, W
    except Exception as exc:  # recorded per cell
        cell.status = "failed"
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.seconds = time.perf_counter() - t0
    return cell


@dataclass(frozen=True)
class SignificanceCell:
    """Sign of an estimate and its significance band."""

    sign: str
    band: str

    @classmethod
    def from_estimate(cls, estimate: float, p: float) -> "SignificanceCell":
        return cls("+" if estimate > 0 else "−", stars(p))

    def __str__(self) -> str:
        return self.sign + self.band


def sign_table(cells: Sequence[CellResult], variables: Sequence[str] = FOCUS_TERMS):
    """Period x variable grid of :class:`SignificanceCell` (``None`` when the
    cell failed or lacks the variable)."""
    grid = {}
    for c in cells:
        row = {}
        for v in variables:
            hit = c.p_value(v)
            row[v] = None if hit is None else SignificanceCell.from_estimate(*hit)
        grid[c.period] = row
    return grid


def _sign_tsv(grid, variables=FOCUS_TERMS, n_by_period=None) -> str:
    head = ["period", *variables] + (["n"] if n_by_period else [])
    lines = ["\t".join(head)]
    for period in sorted(grid, reverse=True):
        row = [f"1990-{period}"] + ["" if grid[period][v] is None else str(grid[period][v]) for v in variables]
        if n_by_period:
            row.append(str(n_by_period[period]))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


@dataclass(eq=False)
class BatteryReport:
    config: BatteryConfig
    cells: list[CellResult]
    extras: dict = field(default_factory=dict)
    matching: list[tuple[MatchSpec, MatchResult | None, str]] = field(default_factory=list)
    tables: dict[str, str] = field(default_factory=dict)

    def cell(self, variant: str, period: int) -> CellResult:
        for c in self.cells:
            if c.variant == variant and c.period == period:
                return c
        raise KeyError((variant, period))


def _base_diagnostics(study: StudyData, base: CellResult, white: CellResult | None) -> dict:
    """Residual diagnostics, competing spatial models and impacts for the
    base period."""
    out: dict = {}
    W, d, tsls = base.W, base.design, base.tsls
    pos = study.frame.index.get_indexer(list(W.ids))
    arr = period_arrays(study.frame, base.period)
    X1 = np.column_stack([d.X[:, :1], arr["y0"][pos], d.X[:, 1:]])
    eq1 = ols(arr["g"][pos], X1, (d.names[0], "y0", *d.names[1:]))
    out["ols_growth"] = eq1
    out["lm"] = {"growth_ols": lm_tests(eq1, W), "stage3_ols": lm_tests(tsls.stage3, W)}
    out["moran"] = {"stage3_resid": morans_i(tsls.stage3.resid, W), "pi": morans_i(tsls.pi, W)}
    if isinstance(base.fit, SpatialFit) and base.fit.kind == "SAR":
        out["lm_sar_resid"] = lm_residual_autocorr(base.fit, W)
        out["sem"] = fit_sem(tsls.pi, d.X, W, d.names)
        out["sac"] = fit_sac(tsls.pi, d.X, W, d.names)
        out["impacts"] = {"SAR": impacts(base.fit, W)}
        if white is not None and white.status == "ok":
            out["impacts"]["GS2SLS_WHITE"] = impacts(white.fit, white.W)
    return out


def _propensity_design(design: Design, d: np.ndarray, extra_squares: Sequence[str]):
    """Propensity design ``[1, covariates, selected squares]``.

    Sea-level rise and coast distance define treatment and stay out.
    Covariates constant among the treated (dummies of landlocked regions)
    would predict control status perfectly and are dropped too.
    """
    skip = {"const", *FOCUS_TERMS}
    treated = d > 0
    keep = [
        i for i, nm in enumerate(design.names)
        if nm not in skip and np.ptp(design.X[treated, i]) > 0
    ]
    cov = design.X[:, keep]
    cov_names = [design.names[i] for i in keep]
    unknown = [nm for nm in extra_squares if nm not in cov_names]
    if unknown:
        raise ValueError(f"extra_squares name(s) not among the propensity covariates: {', '.join(unknown)}")
    sq = [nm for nm in (*PS_SQUARES, *extra_squares) if nm in cov_names]
    Xps = np.column_stack([np.ones(len(cov)), cov] + [cov[:, cov_names.index(nm)] ** 2 for nm in sq])
    names = ["const", *cov_names, *(f"{nm}^2" for nm in sq)]
    return Xps, names, cov, cov_names


def run_matching_specs(study: StudyData, config: BatteryConfig, specs: Sequence[MatchSpec] | None = None,
                       period: int | None = None):
    """Propensity-score matching of high sea-level-rise coastal counties.

    Treated and control sets follow :func:`slrgrowth.slr.treated_set` with
    the coastal 10% quantile as threshold; the outcome is growth over the
    base period.
    """
    period = period or config.base_period
    cs = study.county_slr("nearest", "full")
    threshold = coastal_quantile(cs, 0.10)
    results = []
    for k, spec in enumerate(specs if specs is not None else config.matching):
        try:
            part = treated_set(cs, threshold, full_width=spec.full_width)
            ids = [f for f in study.frame.index if f in part.treated or f in part.controls]
            sub = study.frame.loc[ids]
            design = build_design(sub, study.slr_mm(), drop_constant=True)
            d = np.array([f in part.treated for f in ids], dtype=float)
            Xps, names, cov, cov_names = _propensity_design(design, d, spec.extra_squares)
            y = period_arrays(sub, period)["g"]
            mc = MatchConfig(caliper=spec.caliper, controls_per_treated=spec.controls_per_treated,
                             replace=spec.replace, seed=config.seed + k, caliper_scale=spec.caliper_scale)
            res = run_matching(d, Xps, y, mc, kind=spec.ps_model, names=names,
                               balance_covariates=cov, balance_names=cov_names, n_boot=config.n_boot)
            results.append((spec, res, "", ids, threshold, int(d.sum())))
        except Exception as exc:
            results.append((spec, None, f"{type(exc).__name__}: {exc}", [], threshold, 0))
    return results


def run_battery(config: BatteryConfig, study: StudyData | None = None, with_matching: bool = True) -> BatteryReport:
    """Run every (variant, period) cell, the base-period extras and matching."""
    study = study or load_study(config.data)
    jobs = [(v, p) for v in config.variants for p in config.periods]

    def one(job):
        return run_cell(study, job[0], job[1], config.depletion_groups)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            cells = list(pool.map(one, jobs))
    else:
        cells = [one(j) for j in jobs]
    report = BatteryReport(config=config, cells=cells)

    names = [v.name for v in config.variants]
    if "base" in names:
        base = report.cell("base", config.base_period)
        white = report.cell("white", config.base_period) if "white" in names else None
        if base.status == "ok" and base.W is not None:
            try:
                report.extras = _base_diagnostics(study, base, white)
            except Exception as exc:
                report.extras = {"error": f"{type(exc).__name__}: {exc}"}
    if with_matching and config.matching:
        report.matching = run_matching_specs(study, config)
    report.tables = _tables(study, report)
    return report


# ----------------------------------------------------------------- emitters

def _g(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "nan" if not np.isfinite(v) else f"{v:.6g}"


def _descriptives(study: StudyData, period: int) -> str:
    frame = study.frame.copy()
    frame["g"] = period_arrays(frame, period)["g"]
    frame["y0"] = np.log(frame["income_1990"].to_numpy(float))
    frame["slr"] = study.slr_mm().to_numpy()
    variables = ["g", "y0", "slr", "coast_distance", "gov_expenditure_pc", "tax_income_pc",
                 "population_density", "urban", "rural", "catholics_pct", "evangelical_pct",
                 "mainline_pct", "religious_diversity", "education_pct", "highway", "right_to_work",
                 "nonwhites_pct", "amenities"]
    lines = ["subsample\tvariable\tmean\tsd\tn"]
    for label, mask in (("all", None), ("coastal", frame["is_coastal"].to_numpy(bool)),
                        ("inland", ~frame["is_coastal"].to_numpy(bool))):
        ds = descriptive_stats(frame, variables, mask)
        for v in variables:
            lines.append(f"{label}\t{v}\t{_g(ds.mean[v])}\t{_g(ds.sd[v])}\t{ds.n}")
    st = pd.DataFrame({"trend": [s.trend for s in study.stations["full"]]})
    ds = descriptive_stats(st, ["trend"])
    lines.append(f"stations\tslr\t{_g(ds.mean['trend'])}\t{_g(ds.sd['trend'])}\t{ds.n}")
    return "\n".join(lines) + "\n"


def _cells_tsv(cells) -> str:
    head = ["variant", "period", "model", "status", "n", "beta", "beta_se", "convergence_rate",
            "first_stage_f", "sargan", "sargan_p", "wu_hausman", "wu_hausman_p", "rho", "rho_se",
            "lambda", "lambda_se", "log_likelihood", "dropped", "error"]
    lines = ["\t".join(head)]
    for c in cells:
        t, f = c.tsls, c.fit
        sp = f if isinstance(f, SpatialFit) else None
        row = [c.variant, str(c.period), c.model, c.status, str(c.n)]
        if t is not None:
            try:
                rate = t.convergence_rate
            except ValueError:
                rate = float("nan")
            row += [_g(t.beta), _g(t.stage2.se[1]), _g(rate), _g(t.first_stage_f),
                    _g(t.sargan[0]), _g(t.sargan[1]), _g(t.wu_hausman[0]), _g(t.wu_hausman[1])]
        else:
            row += [""] * 8
        if sp is not None:
            row += [_g(sp.rho), _g(sp.rho_se), _g(sp.lam), _g(sp.lam_se), _g(sp.log_likelihood)]
        else:
            row += [""] * 5
        row += [",".join(c.dropped), c.error.replace("\t", " ").replace("\n", " ")]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def _coef_tsv(cells) -> str:
    lines = ["variant\tperiod\tterm\testimate\tse\tp\tstars"]
    for c in cells:
        for r in c.coefficients():
            lines.append(f"{c.variant}\t{c.period}\t{r['name']}\t{_g(r['estimate'])}\t{_g(r['se'])}"
                         f"\t{_g(r['p'])}\t{stars(r['p'])}")
    return "\n".join(lines) + "\n"


def _impacts_tsv(imp: Mapping[str, ImpactMeasures]) -> str:
    lines = ["model\tvariable\tdirect\tindirect\ttotal"]
    for model, m in imp.items():
        for i, nm in enumerate(m.names):
            lines.append(f"{model}\t{nm}\t{_g(m.direct[i])}\t{_g(m.indirect[i])}\t{_g(m.total[i])}")
    return "\n".join(lines) + "\n"


def _lm_tsv(ex: dict) -> str:
    lines = ["residuals\ttest\tstatistic\tp"]
    for label, rep in ex.get("lm", {}).items():
        for name, s, p in rep.rows():
            lines.append(f"{label}\t{name}\t{_g(s)}\t{_g(p)}")
    if "lm_sar_resid" in ex:
        s, p = ex["lm_sar_resid"]
        lines.append(f"sar\tLM residual autocorrelation\t{_g(s)}\t{_g(p)}")
    for label, m in ex.get("moran", {}).items():
        lines.append(f"{label}\tMoran's I\t{_g(m.I)}\t{_g(m.p)}")
    return "\n".join(lines) + "\n"


def _models_tsv(report: BatteryReport) -> str:
    """Base-period SAR, SEM and SAC side by side."""
    ex = report.extras
    lines = ["model\tterm\testimate\tse\tp\tstars"]
    fits = [("SAR", report.cell("base", report.config.base_period).fit)]
    fits += [(k.upper(), ex[k]) for k in ("sem", "sac") if k in ex]
    for label, f in fits:
        for r in f.table():
            lines.append(f"{label}\t{r['name']}\t{_g(r['estimate'])}\t{_g(r['se'])}\t{_g(r['p'])}\t{r['stars']}")
        lines.append(f"{label}\tlog_likelihood\t{_g(f.log_likelihood)}\t\t\t")
    return "\n".join(lines) + "\n"


def _matching_tsv(results) -> str:
    lines = ["spec\tps_model\tcaliper\tcontrols_per_treated\tthreshold\tn_treated\tn_matched\tatt\tse\tp"
             "\tbalanced\tps_converged\terror"]
    for k, (spec, res, err, _, thr, nt) in enumerate(results, start=1):
        if res is None:
            lines.append(f"{k}\t{spec.ps_model}\t{spec.caliper}\t{spec.controls_per_treated}\t{_g(thr)}\t{nt}"
                         f"\t\t\t\t\t\t\t{err}")
            continue
        lines.append(
            f"{k}\t{spec.ps_model}\t{spec.caliper}\t{spec.controls_per_treated}\t{_g(thr)}\t{nt}"
            f"\t{res.n_matched}\t{_g(res.att)}\t{_g(res.se)}\t{_g(res.p)}\t{res.balance.balanced()}"
            f"\t{res.model.converged}\t"
        )
    return "\n".join(lines) + "\n"


def _tables(study: StudyData, report: BatteryReport) -> dict[str, str]:
    cfg = report.config
    t = {
        "descriptives.tsv": _descriptives(study, cfg.base_period),
        "cells.tsv": _cells_tsv(report.cells),
        "coefficients.tsv": _coef_tsv(report.cells),
    }
    for v in cfg.variants:
        cells = [c for c in report.cells if c.variant == v.name]
        n_col = {c.period: c.n for c in cells} if v.subsample == "no_outliers" else None
        t[f"signs_{v.name}.tsv"] = _sign_tsv(sign_table(cells), n_by_period=n_col)
    ex = report.extras
    if "lm" in ex:
        t["lm_tests.tsv"] = _lm_tsv(ex)
    if "impacts" in ex:
        t["impacts.tsv"] = _impacts_tsv(ex["impacts"])
        t["models.tsv"] = _models_tsv(report)
        sar = ex["impacts"]["SAR"]
        if "slr" in sar.names and "slr2" in sar.names and study.coast_order:
            slr = study.slr_mm()
            counties = [(f, s, float(slr[f])) for f, s in study.coast_order]
            t["figure_impacts.svg"] = figure_impacts(sar["slr"][2], sar["slr2"][2], counties)
    if report.matching:
        t["matching.tsv"] = _matching_tsv(report.matching)
        for k, (_, res, _, ids, _, _) in enumerate(report.matching, start=1):
            if res is not None:
                t[f"balance_{k}.tsv"] = res.balance.to_tsv()
                t[f"pairs_{k}.tsv"] = res.pairs_tsv(ids)
    return t


def write_report(report: BatteryReport, out_dir: str | Path | None = None) -> Path:
    """Write every table, the figure and the manifest; returns the directory."""
    out = Path(out_dir or report.config.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(report.tables.items()):
        (out / name).write_text(text, encoding="utf-8")
    emit_manifest(report, out / "manifest.json")
    return out


def emit_manifest(report: BatteryReport, path: str | Path, inputs: Mapping[str, str] | None = None) -> dict:
    """Reproducibility record. Everything except ``created`` is a function of
    the configuration and the inputs."""
    cfg = report.config
    config_text = json.dumps(cfg.source, sort_keys=True, default=str)
    if inputs is None:
        inputs = {k: _sha256(p) for k, p in cfg.data.items()}
    manifest = {
        "config": json.loads(config_text),
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "inputs_sha256": dict(sorted(inputs.items())),
        "seeds": {"battery": cfg.seed, "matching": [cfg.seed + k for k in range(len(cfg.matching))],
                  "bootstrap_draws": cfg.n_boot},
        "versions": {"slrgrowth": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__},
        "cells": [
            {"variant": c.variant, "period": c.period, "model": c.model, "status": c.status,
             "n": c.n, "error": c.error}
            for c in report.cells
        ],
        "outputs_sha256": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(report.tables.items())},
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
