"""
Design matrices for the growth equations.

This is the single place where stored units are converted to model units:

* sea-level rise: mm/year -> m/year
* coast distance: km -> thousand km
* government finance variables: US$ -> thousand US$
* population density: per square mile -> thousand per square mile

Squared terms are formed here from the converted values and never stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .dataset import OMITTED_REGION, REGIONS

__all__ = ["Design", "build_design", "slr_model_units", "BASE_FINANCE", "FOCUS_TERMS"]

BASE_FINANCE = ("gov_expenditure_pc", "tax_income_pc")
FOCUS_TERMS = ("slr", "slr2", "coast", "coast2")
SLR_SCALE = 1e-3  # mm/year -> m/year


def slr_model_units(slr_mm):
    """Sea-level rise in the unit its coefficients refer to (m/year)."""
    return np.asarray(slr_mm, dtype=float) * SLR_SCALE


_CONTROLS = (
    ("popdens", "population_density", 1e-3),
    ("urban", "urban", 1.0),
    ("rural", "rural", 1.0),
    ("catholics", "catholics_pct", 1.0),
    ("evangelical", "evangelical_pct", 1.0),
    ("mainline", "mainline_pct", 1.0),
    ("reldiv", "religious_diversity", 1.0),
    ("education", "education_pct", 1.0),
    ("highway", "highway", 1.0),
    ("right_to_work", "right_to_work", 1.0),
    ("nonwhites", "nonwhites_pct", 1.0),
    ("amenities", "amenities", 1.0),
)


@dataclass(frozen=True, eq=False)
class Design:
    X: np.ndarray
    names: tuple[str, ...]
    fips: tuple[str, ...]
    dropped: tuple[str, ...] = ()

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def build_design(
    frame: pd.DataFrame,
    slr_mm: Mapping[str, float] | pd.Series,
    finance: Sequence[str] = BASE_FINANCE,
    include_coast: bool = True,
    drop_constant: bool = True,
) -> Design:
    """Regressors for the third-stage and spatial equations.

    Parameters
    ----------
    frame : DataFrame
        County table indexed by FIPS (see :func:`slrgrowth.dataset.to_frame`).
    slr_mm : mapping
        County sea-level rise in mm/year.
    finance : sequence of str
        Government-finance columns (stored in US$).
    include_coast : bool
        Whether to add coast distance and its square.
    drop_constant : bool
        Drop non-intercept columns that are constant in this sample, such as
        region dummies of regions absent from a subsample.
    """
    fips = tuple(frame.index)
    n = len(fips)
    slr = slr_model_units([float(slr_mm[f]) for f in fips])
    cols: list[tuple[str, np.ndarray]] = [("const", np.ones(n)), ("slr", slr), ("slr2", slr**2)]
    if include_coast:
        coast = frame["coast_distance"].to_numpy(dtype=float) * 1e-3
        cols += [("coast", coast), ("coast2", coast**2)]
    for name in finance:
        cols.append((name, frame[name].to_numpy(dtype=float) * 1e-3))
    for label, col, scale in _CONTROLS:
        cols.append((label, frame[col].to_numpy(dtype=float) * scale))
    for region in REGIONS:
        if region != OMITTED_REGION:
            cols.append((region, (frame["region"] == region).to_numpy(dtype=float)))

    dropped = []
    if drop_constant:
        kept = []
        for name, v in cols:
            if name != "const" and n > 0 and np.all(v == v[0]):
                dropped.append(name)
            else:
                kept.append((name, v))
        cols = kept
    X = np.column_stack([v for _, v in cols]) if n else np.empty((0, len(cols)))
    return Design(X=X, names=tuple(nm for nm, _ in cols), fips=fips, dropped=tuple(dropped))
