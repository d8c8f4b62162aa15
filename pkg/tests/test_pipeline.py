import dataclasses
import json

import numpy as np
import pytest

from slrgrowth.config import MatchSpec, VariantSpec
from slrgrowth.pipeline import (
    SignificanceCell,
    period_arrays,
    run_battery,
    run_cell,
    run_matching_specs,
    sign_table,
    write_report,
)


@pytest.fixture(scope="module")
def small_config(battery_config):
    keep = {"base", "white", "coastal", "finance_none"}
    return dataclasses.replace(
        battery_config,
        periods=(2012, 2005),
        variants=tuple(v for v in battery_config.variants if v.name in keep),
        matching=battery_config.matching[:1],
        n_boot=50,
    )


@pytest.fixture(scope="module")
def small_report(small_config, study):
    return run_battery(small_config, study)


class TestCells:
    def test_base_cell(self, study):
        cell = run_cell(study, VariantSpec("base"), 2012)
        assert cell.status == "ok" and cell.n == 3063
        assert cell.fit.kind == "SAR" and 0 < cell.fit.rho < 1
        assert cell.fit.names[:3] == ("const", "slr", "slr2")
        np.testing.assert_array_equal(cell.tsls.pi, period_arrays(study.frame.loc[list(cell.W.ids)], 2012)["g"]
                                      - cell.tsls.beta * period_arrays(study.frame.loc[list(cell.W.ids)], 2012)["y0"])

    @pytest.mark.parametrize(
        "variant, check",
        [
            (VariantSpec("c", subsample="coastal", model="3sls"), lambda n: n == 274),
            (VariantSpec("d", subsample="depletion", depletion_k=4), lambda n: n < 3063),
            (VariantSpec("o", subsample="no_outliers"), lambda n: 2500 <= n <= 2700),
        ],
    )
    def test_subsample_sizes(self, study, battery_config, variant, check):
        cell = run_cell(study, variant, 2012, battery_config.depletion_groups)
        assert cell.status == "ok", cell.error
        assert check(cell.n), cell.n

    def test_near_coast_quartile(self, study):
        c = study.frame["coast_distance"].to_numpy(float)
        q1 = np.sort(c)[int(np.ceil(0.25 * c.size)) - 1]
        cell = run_cell(study, VariantSpec("nc", subsample="near_coast"), 2012)
        # ties at the quartile stay in the sample
        assert cell.n == int(np.sum(c <= q1)) >= int(np.ceil(0.25 * c.size))

    def test_depletion_monotone(self, study, battery_config):
        ns = [run_cell(study, VariantSpec("d", subsample="depletion", depletion_k=k, model="3sls"), 2012,
                       battery_config.depletion_groups).n for k in range(1, 5)]
        assert ns == sorted(ns, reverse=True) and len(set(ns)) == 4

    def test_failure_recorded(self, study):
        cell = run_cell(study, VariantSpec("bad", finance=("no_such_column",)), 2012)
        assert cell.status == "failed" and "no_such_column" in cell.error
        assert cell.coefficients() == [] and cell.p_value("slr") is None


class TestSignTable:
    def test_cells(self):
        assert str(SignificanceCell.from_estimate(0.5, 0.0005)) == "+***"
        assert str(SignificanceCell.from_estimate(0.5, 0.001)) == "+**"
        assert str(SignificanceCell.from_estimate(-0.5, 0.2)) == "−"

    def test_grid(self, small_report):
        cells = [c for c in small_report.cells if c.variant == "base"]
        grid = sign_table(cells)
        assert set(grid) == {2012, 2005}
        assert all(grid[2012][v] is not None for v in ("slr", "slr2", "coast", "coast2"))
        coastal = sign_table([c for c in small_report.cells if c.variant == "coastal"])
        assert coastal[2012]["coast"] is None


class TestBattery:
    def test_cells_and_extras(self, small_report, small_config):
        assert len(small_report.cells) == len(small_config.variants) * 2
        assert all(c.status == "ok" for c in small_report.cells), [c.error for c in small_report.cells]
        ex = small_report.extras
        assert {"lm", "moran", "sem", "sac", "impacts", "lm_sar_resid"} <= set(ex)
        assert set(ex["impacts"]) == {"SAR", "GS2SLS_WHITE"}
        assert ex["sac"].log_likelihood >= max(small_report.cell("base", 2012).fit.log_likelihood,
                                               ex["sem"].log_likelihood) - 1e-9
        with pytest.raises(KeyError):
            small_report.cell("base", 1999)

    def test_tables(self, small_report):
        t = small_report.tables
        assert {"descriptives.tsv", "cells.tsv", "coefficients.tsv", "lm_tests.tsv", "impacts.tsv",
                "models.tsv", "figure_impacts.svg", "matching.tsv", "balance_1.tsv", "pairs_1.tsv",
                "signs_base.tsv", "signs_coastal.tsv"} <= set(t)
        lines = t["signs_base.tsv"].splitlines()
        assert lines[0] == "period\tslr\tslr2\tcoast\tcoast2"
        assert [ln.split("\t")[0] for ln in lines[1:]] == ["1990-2012", "1990-2005"]

    def test_thread_invariance(self, small_config, small_report, study):
        again = run_battery(dataclasses.replace(small_config, workers=3), study)
        assert again.tables == small_report.tables

    def test_write_report(self, small_report, tmp_path):
        out = write_report(small_report, tmp_path / "r")
        for name, text in small_report.tables.items():
            assert (out / name).read_text(encoding="utf-8") == text
        m = json.loads((out / "manifest.json").read_text())
        assert m["seeds"]["battery"] == 2016 and m["seeds"]["bootstrap_draws"] == 50
        assert set(m["inputs_sha256"]) >= {"counties", "adjacency", "stations"}
        assert len(m["cells"]) == len(small_report.cells)
        assert set(m["outputs_sha256"]) == set(small_report.tables)
        assert {"numpy", "scipy", "pandas", "python", "slrgrowth"} <= set(m["versions"])


class TestMatchingSpecs:
    def test_fixture_matching(self, study, battery_config):
        cfg = dataclasses.replace(battery_config, n_boot=50)
        (spec, res, err, ids, threshold, n_treated), = run_matching_specs(study, cfg, [MatchSpec()])
        assert err == "" and res is not None
        assert threshold == pytest.approx(1.8)
        assert 0 < res.n_matched <= n_treated
        assert len(ids) == len(res.matching.scores)
        names = [r.name for r in res.balance.rows]
        assert "slr" not in names and "coast" not in names

    def test_failure_is_captured(self, study, battery_config):
        bad = MatchSpec(extra_squares=("nonexistent",))
        (_, res, err, *_), = run_matching_specs(study, battery_config, [bad])
        assert res is None and err.startswith("ValueError") and "nonexistent" in err
