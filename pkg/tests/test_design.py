import numpy as np
import pandas as pd
import pytest

from slrgrowth.design import BASE_FINANCE, build_design, slr_model_units
from slrgrowth.figure import bar_heights, figure_impacts


def _frame(n=4, region="FarWest"):
    rng = np.random.default_rng(0)
    cols = ["population_density", "urban", "rural", "catholics_pct", "evangelical_pct", "mainline_pct",
            "religious_diversity", "education_pct", "highway", "right_to_work", "nonwhites_pct", "amenities",
            "gov_expenditure_pc", "tax_income_pc"]
    df = pd.DataFrame(rng.uniform(1, 10, (n, len(cols))), columns=cols, index=[f"{i:05d}" for i in range(n)])
    df["coast_distance"] = [10.0, 20.0, 30.0, 40.0][:n]
    df["region"] = region
    return df


class TestDesign:
    def test_units_and_squares(self):
        df = _frame()
        slr = {f: v for f, v in zip(df.index, [2.0, 0.0, -1.0, 3.5])}
        d = build_design(df, slr)
        np.testing.assert_allclose(d.column("slr"), [0.002, 0.0, -0.001, 0.0035])
        np.testing.assert_allclose(d.column("slr2"), d.column("slr") ** 2)
        np.testing.assert_allclose(d.column("coast"), [0.01, 0.02, 0.03, 0.04])
        np.testing.assert_allclose(d.column("coast2"), d.column("coast") ** 2)
        np.testing.assert_allclose(d.column("popdens"), df["population_density"] * 1e-3)
        for name in BASE_FINANCE:
            np.testing.assert_allclose(d.column(name), df[name] * 1e-3)
        assert d.names[:5] == ("const", "slr", "slr2", "coast", "coast2")
        assert d.fips == tuple(df.index)

    def test_constant_columns_dropped(self):
        d = build_design(_frame(), dict.fromkeys(_frame().index, 1.0))
        # one region only, and constant sea-level rise
        assert {"slr", "slr2"} <= set(d.dropped)
        assert "const" in d.names and "FarWest" not in d.names
        kept = build_design(_frame(), dict.fromkeys(_frame().index, 1.0), drop_constant=False)
        assert kept.X.shape[1] == d.X.shape[1] + len(d.dropped)

    def test_no_coast_and_custom_finance(self):
        d = build_design(_frame(), dict.fromkeys(_frame().index, 1.0), finance=("tax_income_pc",),
                         include_coast=False, drop_constant=False)
        assert "coast" not in d.names and "gov_expenditure_pc" not in d.names
        with pytest.raises(KeyError):
            build_design(_frame(), dict.fromkeys(_frame().index, 1.0), finance=("missing_col",))

    def test_slr_units(self):
        np.testing.assert_allclose(slr_model_units([1.0, -2.5]), [0.001, -0.0025])


class TestFigure:
    COUNTIES = [("1", "A", 2.0), ("2", "A", 3.0), ("3", "B", -1.0), ("4", "C", 5.0)]

    def test_heights(self):
        s = np.array([2.0, -1.0]) * 1e-3
        np.testing.assert_allclose(bar_heights(1.5, -20.0, [2.0, -1.0]), 1.5 * s - 20.0 * s**2)
        with pytest.raises(ValueError):
            bar_heights(1.0, 1.0, [np.nan])

    def test_deterministic_svg(self):
        a = figure_impacts(1.1, -3.0, self.COUNTIES)
        assert a == figure_impacts(1.1, -3.0, self.COUNTIES)
        assert a.startswith("<svg") and a.rstrip().endswith("</svg>")
        assert a.count("<rect") == 4

    def test_state_fill_alternates(self):
        svg = figure_impacts(1.0, 0.0, self.COUNTIES)
        fills = [line.split('fill="')[1].split('"')[0] for line in svg.splitlines() if "<rect" in line]
        assert fills == ["black", "black", "white", "black"]

    def test_missing_value(self):
        with pytest.raises(ValueError, match="county 9"):
            figure_impacts(1.0, 0.0, [("9", "A", float("nan"))])

    def test_escaping(self):
        svg = figure_impacts(1.0, 0.0, [("1", "A&B", 1.0)], title="x < y")
        assert "A&amp;B" in svg and "x &lt; y" in svg
