import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from slrgrowth.matching import (
    MatchConfig,
    Matching,
    SeparationWarning,
    att,
    balance,
    fit_propensity,
    ks_bootstrap,
    match_units,
    run_matching,
)


def _newton_oracle(d, X, kind, tol=1e-13):
    """Independent Newton (logit) or Fisher scoring (probit) solver."""
    b = np.zeros(X.shape[1])
    for _ in range(200):
        eta = X @ b
        if kind == "logit":
            p = 1 / (1 + np.exp(-eta))
            g = X.T @ (d - p)
            H = (X * (p * (1 - p))[:, None]).T @ X
        else:
            p, phi = stats.norm.cdf(eta), stats.norm.pdf(eta)
            g = X.T @ (phi * (d - p) / (p * (1 - p)))
            H = (X * (phi**2 / (p * (1 - p)))[:, None]).T @ X
        step = np.linalg.solve(H, g)
        b = b + step
        if np.max(np.abs(step)) < tol:
            break
    return b, np.sqrt(np.diag(np.linalg.inv(H)))


def _logit_data(seed, n=400):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    d = (rng.random(n) < 1 / (1 + np.exp(-(X @ [-0.5, 1.0, -0.7])))).astype(float)
    return d, X


class TestPropensity:
    @pytest.mark.parametrize("kind", ["logit", "probit"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_newton_oracle(self, kind, seed):
        d, X = _logit_data(seed)
        m = fit_propensity(d, X, kind)
        b, se = _newton_oracle(d, X, kind)
        assert m.converged and not m.separated
        np.testing.assert_allclose(m.coef, b, atol=1e-8)
        np.testing.assert_allclose(m.se, se, rtol=1e-6)
        assert np.all((m.scores > 0) & (m.scores < 1))

    def test_intercept_only(self):
        d = np.array([1, 0, 1, 0, 1, 0, 0, 1], dtype=float)
        for kind in ("logit", "probit", "lpm"):
            np.testing.assert_allclose(fit_propensity(d, np.ones((8, 1)), kind).scores, 0.5, atol=1e-10)

    def test_separation_flagged(self):
        x = np.linspace(-2, 2, 40)
        d = (x > 0).astype(float)
        X = np.column_stack([np.ones(40), x])
        with pytest.warns(SeparationWarning):
            m = fit_propensity(d, X, "logit")
        assert m.separated and not m.converged
        assert "fitted probabilities" in m.diagnostic

    def test_lpm_clipping(self):
        x = np.linspace(-3, 3, 50)
        d = (x + np.sin(7 * x) > 0).astype(float)
        m = fit_propensity(d, np.column_stack([np.ones(50), x]), "lpm")
        assert m.clipped
        assert m.scores.min() >= 0 and m.scores.max() <= 1

    def test_validation(self):
        X = np.ones((4, 1))
        with pytest.raises(ValueError):
            fit_propensity([0, 1, 2, 0], X)
        with pytest.raises(ValueError):
            fit_propensity([1, 1, 1, 1], X)
        with pytest.raises(ValueError):
            fit_propensity([0, 1, 0], X)
        with pytest.raises(ValueError):
            fit_propensity([0, 1, 0, 1], X, "cloglog")


class TestMatchConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            MatchConfig(caliper=0)
        with pytest.raises(ValueError):
            MatchConfig(controls_per_treated=0)
        with pytest.raises(ValueError):
            MatchConfig(caliper_scale="mahalanobis")


def _random_design(draw):
    n = draw(st.integers(4, 40))
    scores = np.array(draw(st.lists(st.floats(0.01, 0.99), min_size=n, max_size=n)))
    d = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    d[0], d[1] = True, False
    return scores, d


class TestMatchUnits:
    def test_nearest(self):
        scores = np.array([0.50, 0.52, 0.90, 0.51, 0.10])
        d = np.array([1, 0, 0, 1, 0])
        # width is 1.0 * sd(scores) = 0.29, so only one treated unit reaches a control
        m = match_units(scores, d, MatchConfig(caliper=1.0))
        assert m.n_matched == 1 and m.controls == [1]
        m = match_units(scores, d, MatchConfig(caliper=1.5))
        assert m.n_matched == 2 and 1 in m.controls

    def test_caliper_excludes(self):
        scores = np.array([0.1, 0.9, 0.5, 0.5])
        d = np.array([1, 0, 0, 0])
        assert match_units(scores, d, MatchConfig(caliper=0.01)).n_matched == 0

    def test_covariate_box(self):
        # equal scores, so the covariate box alone decides
        scores = np.full(3, 0.5)
        d = np.array([1, 0, 0])
        X = np.array([[0.0], [10.0], [0.1]])
        for seed in range(5):
            m = match_units(scores, d, MatchConfig(caliper=0.25, caliper_scale="covariate_sd", seed=seed), X=X)
            assert m.pairs == {0: (2,)}
        with pytest.raises(ValueError):
            match_units(scores, d, MatchConfig(caliper_scale="covariate_sd"))

    @given(st.data())
    def test_no_duplicate_controls(self, data):
        scores, d = _random_design(data.draw)
        k = data.draw(st.integers(1, 3))
        m = match_units(scores, d, MatchConfig(caliper=0.5, controls_per_treated=k, seed=3))
        used = [j for cs in m.pairs.values() for j in cs]
        assert len(used) == len(set(used))
        assert all(not d[j] for j in used) and all(d[i] for i in m.pairs)
        assert all(1 <= len(cs) <= k for cs in m.pairs.values())
        width = 0.5 * np.std(scores, ddof=1)
        assert all(abs(scores[i] - scores[j]) <= width for i, cs in m.pairs.items() for j in cs)

    @given(st.data(), st.floats(0.01, 1.0), st.floats(1.0, 4.0))
    def test_caliper_monotone_one_to_one(self, data, c, factor):
        scores, d = _random_design(data.draw)
        seed = data.draw(st.integers(0, 1000))
        narrow = match_units(scores, d, MatchConfig(caliper=c, seed=seed))
        wide = match_units(scores, d, MatchConfig(caliper=c * factor, seed=seed))
        assert wide.n_matched >= narrow.n_matched

    def test_seed_determinism(self, rng):
        scores = rng.random(200)
        d = rng.random(200) < 0.3
        a = match_units(scores, d, MatchConfig(seed=9))
        b = match_units(scores, d, MatchConfig(seed=9))
        assert a.pairs == b.pairs

    @given(st.integers(0, 2**31 - 1))
    def test_relabeling_with_replacement(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        scores, y = rng.random(n), rng.standard_normal(n)
        d = rng.random(n) < 0.4
        d[:2] = [True, False]
        perm = rng.permutation(n)
        cfg = MatchConfig(caliper=0.5, replace=True)
        a = att(match_units(scores, d, cfg), y)
        b = att(match_units(scores[perm], d[perm], cfg), y[perm])
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


class TestAtt:
    def test_single_pair(self):
        m = Matching({0: (1,)}, np.array([0.5, 0.5]), np.array([True, False]))
        tau, se, p = att(m, [5.0, 3.0])
        assert tau == 2.0 and se == 0.0 and p == 0.0

    def test_two_treated(self):
        d = np.array([True, True, False, False, False])
        m = Matching({0: (2, 3), 1: (4,)}, np.full(5, 0.5), d)
        tau, se, _ = att(m, [8.0, 3.0, 6.0, 4.0, 5.0])
        assert tau == 0.5
        assert se == pytest.approx(np.sqrt(12.5 / 4))

    def test_reuse_term(self):
        scores = np.array([0.50, 0.52, 0.51, 0.90])
        d = np.array([True, True, False, False])
        m = match_units(scores, d, MatchConfig(caliper=0.25, replace=True))
        assert m.pairs == {0: (2,), 1: (2,)}
        tau, se, _ = att(m, [5.0, 7.0, 3.0, 10.0])
        # squared deviations 2, reuse K^2 - K' = 2 times (3 - 10)^2 / 2
        assert tau == 3.0
        assert se == pytest.approx(np.sqrt((2 + 2 * 24.5) / 4))

    def test_without_replacement_is_pair_variance(self, rng):
        scores, y = rng.random(300), rng.standard_normal(300)
        d = rng.random(300) < 0.3
        m = match_units(scores, d, MatchConfig(caliper=0.25))
        diffs = np.array([y[i] - y[m.pairs[i][0]] for i in m.treated])
        tau, se, _ = att(m, y)
        assert tau == pytest.approx(diffs.mean())
        assert se == pytest.approx(diffs.std() / np.sqrt(diffs.size))

    def test_empty(self):
        with pytest.raises(ValueError):
            att(Matching({}, np.zeros(2), np.array([True, False])), [1.0, 2.0])


class TestBalance:
    def test_identical_samples(self):
        d = np.array([True, True, True, False, False, False])
        m = Matching({0: (3,), 1: (4,), 2: (5,)}, np.full(6, 0.5), d)
        X = np.array([[1.0], [2.0], [3.0], [1.0], [2.0], [3.0]])
        r = balance(m, X, ["x"], n_boot=200).rows[0]
        assert r.t_p == pytest.approx(1.0) and r.ks_d == 0.0 and r.ks_boot_p == 1.0
        assert balance(m, X, ["x"], n_boot=200).balanced()

    def test_zero_variance(self):
        d = np.array([True, True, False, False])
        m = Matching({0: (2,), 1: (3,)}, np.full(4, 0.5), d)
        same = balance(m, np.ones((4, 1)), n_boot=50).rows[0]
        assert same.flag == "zero variance" and same.t_p == 1.0
        diff = balance(m, np.array([[1.0], [1.0], [2.0], [2.0]]), n_boot=50).rows[0]
        assert diff.t_p == 0.0

    def test_shifted_sample_detected(self, rng):
        a, b = rng.standard_normal(80), rng.standard_normal(80) + 1.5
        D, p = ks_bootstrap(a, b, n_boot=300, seed=1)
        assert D == pytest.approx(stats.ks_2samp(a, b).statistic)
        assert p < 0.01

    def test_tsv(self):
        d = np.array([True, False])
        m = Matching({0: (1,)}, np.full(2, 0.5), d)
        out = balance(m, np.array([[1.0], [1.0]]), ["tax"], n_boot=10).to_tsv()
        assert out.splitlines()[0].startswith("variable\tmean_treated")
        assert out.splitlines()[1].startswith("tax\t")


class TestRunMatching:
    def test_end_to_end(self):
        rng = np.random.default_rng(4)
        n = 500
        x = rng.standard_normal((n, 2))
        X = np.column_stack([np.ones(n), x])
        d = (rng.random(n) < 1 / (1 + np.exp(-(x @ [0.8, -0.5] - 1)))).astype(float)
        y = 1.0 * d + x @ [1.0, 1.0] + rng.standard_normal(n)
        with warnings.catch_warnings():
            warnings.simplefilter("error", SeparationWarning)
            r = run_matching(d, X, y, MatchConfig(seed=2), names=["const", "a", "b"], n_boot=100)
        assert abs(r.att - 1.0) < 3 * r.se
        assert [row.name for row in r.balance.rows] == ["a", "b"]
        assert r.pairs_tsv().startswith("treated\tcontrols\n")
        assert r.n_matched == r.matching.n_matched > 0
