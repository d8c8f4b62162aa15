import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slrgrowth.regression import ols
from slrgrowth.spatial import (
    ConditioningError,
    fit_gs2sls_white,
    fit_sac,
    fit_sar,
    fit_sem,
    impact_measures,
    impacts,
    lm_residual_autocorr,
    lm_tests,
    log_det,
    parameter_bounds,
    sar_concentrated_loglik,
)
from slrgrowth.synth import DgpSpec, evaluate, generate, lattice_weights
from slrgrowth.weights import build_weights

W100 = lattice_weights(10, 10)


def _draw(rho=0.0, lam=0.0, seed=0, rows=10, cols=10, hetero=None):
    return generate(DgpSpec(rows=rows, cols=cols, rho=rho, lam=lam, seed=seed, hetero=hetero))


def _sar_loglik(theta, y, X, D):
    """Full Gaussian log-likelihood of the lag model, dense oracle."""
    k = X.shape[1]
    beta, rho, s2 = theta[:k], theta[k], theta[k + 1]
    n = y.size
    A = np.eye(n) - rho * D
    e = A @ y - X @ beta
    return -0.5 * n * np.log(2 * np.pi * s2) + np.linalg.slogdet(A)[1] - e @ e / (2 * s2)


def _num_hessian(f, x, h=1e-4):
    k = x.size
    H = np.empty((k, k))
    step = h * np.maximum(np.abs(x), 1e-2)
    for i in range(k):
        for j in range(k):
            ei, ej = np.zeros(k), np.zeros(k)
            ei[i], ej[j] = step[i], step[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * step[i] * step[j])
    return H


class TestLogDet:
    def test_zero(self):
        assert log_det(W100, 0.0) == 0.0

    @given(st.floats(-0.99, 0.99), st.integers(2, 12), st.integers(2, 12))
    def test_dense_oracle(self, rho, r, c):
        W = lattice_weights(r, c)
        lo, hi = parameter_bounds(W)
        if not lo < rho < hi:
            return
        sign, ld = np.linalg.slogdet(np.eye(W.n) - rho * W.dense())
        assert sign > 0
        assert log_det(W, rho) == pytest.approx(ld, abs=1e-8)

    def test_infeasible(self):
        with pytest.raises(ValueError):
            log_det(W100, 1.5)

    def test_bounds(self):
        lo, hi = parameter_bounds(W100)
        assert lo == pytest.approx(1 / W100.eigenvalues[0], abs=1e-5)
        assert hi == pytest.approx(1.0, abs=1e-5) and hi < 1.0


class TestSar:
    def test_fixed_zero_is_ols(self):
        d = _draw(seed=1)
        a, b = fit_sar(d.y, d.X, d.W, fixed_rho=0.0), ols(d.y, d.X)
        np.testing.assert_allclose(a.beta, b.coef, rtol=1e-10, atol=1e-12)

    def test_rho_zero_dgp(self):
        d = _draw(seed=2)
        f = fit_sar(d.y, d.X, d.W)
        assert abs(f.rho) < 2 * f.rho_se
        np.testing.assert_allclose(f.beta, ols(d.y, d.X).coef, atol=3 * f.beta_se.max())

    def test_grid_dominance_and_loglik(self):
        d = _draw(rho=0.458, seed=3)
        f = fit_sar(d.y, d.X, d.W)
        lo, hi = parameter_bounds(d.W)
        grid = np.linspace(lo, hi, 101)
        lc = sar_concentrated_loglik(d.y, d.X, d.W, grid)
        assert sar_concentrated_loglik(d.y, d.X, d.W, f.rho) >= lc.max() - 1e-9
        theta = np.r_[f.beta, f.rho, f.sigma2]
        assert f.log_likelihood == pytest.approx(_sar_loglik(theta, d.y, d.X, d.W.dense()), rel=1e-10)

    def test_standard_errors_match_numeric_hessian(self):
        d = _draw(rho=0.458, seed=4)
        f = fit_sar(d.y, d.X, d.W)
        D = d.W.dense()
        theta = np.r_[f.beta, f.rho, f.sigma2]
        H = _num_hessian(lambda t: _sar_loglik(t, d.y, d.X, D), theta)
        se = np.sqrt(np.diag(np.linalg.inv(-H)))
        np.testing.assert_allclose(np.r_[f.beta_se, f.rho_se], se[:-1], rtol=2e-3)

    def test_table_and_lookup(self):
        d = _draw(rho=0.3, seed=5)
        f = fit_sar(d.y, d.X, d.W, names=["const", "a", "b"])
        rows = f.table()
        assert [r["name"] for r in rows] == ["const", "a", "b", "rho"]
        assert f["a"] == f.beta[1]
        assert f.lam is None and f.kind == "SAR"

    def test_dimension_checks(self):
        d = _draw(seed=6)
        with pytest.raises(ValueError):
            fit_sar(d.y[:-1], d.X, d.W)
        with pytest.raises(ValueError):
            fit_sar(d.y, d.X, d.W, fixed_rho=2.0)

    @pytest.mark.slow
    def test_recovery(self):
        r = evaluate("sar", DgpSpec(rows=20, cols=20, rho=0.458, seed=31), 200, workers=4)
        assert abs(r.params["rho"]["bias"]) < 0.02
        assert 0.91 <= r.params["rho"]["coverage"] <= 0.99


class TestSem:
    def test_lambda_zero_reduces_to_ols(self):
        d = _draw(seed=7)
        f = fit_sem(d.y, d.X, d.W)
        assert abs(f.lam) < 2 * f.lam_se
        np.testing.assert_allclose(f.beta, ols(d.y, d.X).coef, atol=2 * f.beta_se.max())
        assert f.rho is None

    def test_likelihood_dominates_lambda_zero(self):
        for seed in range(5):
            d = _draw(lam=0.5, seed=seed)
            f = fit_sem(d.y, d.X, d.W)
            o = ols(d.y, d.X)
            n = d.y.size
            ll0 = -0.5 * n * (np.log(2 * np.pi * (o.resid @ o.resid / n)) + 1)
            assert f.log_likelihood >= ll0 - 1e-9

    @pytest.mark.slow
    def test_recovery(self):
        r = evaluate("sem", DgpSpec(rows=15, cols=15, lam=0.5, seed=10), 200, workers=4)
        assert abs(r.params["lam"]["bias"]) < 0.03
        assert 0.9 <= r.params["lam"]["coverage"] <= 0.99


class TestSac:
    def test_nesting(self):
        for seed in range(5):
            d = _draw(rho=0.3, lam=0.3, seed=seed)
            sac = fit_sac(d.y, d.X, d.W)
            assert sac.log_likelihood >= max(fit_sar(d.y, d.X, d.W).log_likelihood,
                                             fit_sem(d.y, d.X, d.W).log_likelihood) - 1e-9

    def test_null_dgp(self):
        d = _draw(seed=11, rows=15, cols=15)
        f = fit_sac(d.y, d.X, d.W)
        assert abs(f.rho) < 2 * f.rho_se and abs(f.lam) < 2 * f.lam_se

    @pytest.mark.slow
    def test_lag_only_dgp_lambda_insignificant(self):
        r = evaluate("sac", DgpSpec(rows=15, cols=15, rho=0.4, seed=12), 100, workers=4)
        assert abs(r.params["lam"]["mean"]) < 0.05
        assert r.params["lam"]["coverage"] >= 0.9
        assert abs(r.params["rho"]["bias"]) < 0.03


class TestGs2sls:
    def test_sandwich_oracle(self):
        d = _draw(rho=0.4, seed=13, hetero="covariate")
        f = fit_gs2sls_white(d.y, d.X, d.W)
        D = d.W.dense()
        Z = np.column_stack([d.X, D @ d.X[:, 1:]])
        H = np.column_stack([d.X, D @ d.y])
        P = Z @ np.linalg.pinv(Z)
        Hh = P @ H
        delta = np.linalg.solve(Hh.T @ H, Hh.T @ d.y)
        e = d.y - H @ delta
        B = np.linalg.inv(Hh.T @ Hh)
        V = B @ (Hh.T * e**2) @ Hh @ B
        np.testing.assert_allclose(np.r_[f.beta, f.rho], delta, rtol=1e-8)
        np.testing.assert_allclose(np.r_[f.beta_se, f.rho_se], np.sqrt(np.diag(V)), rtol=1e-8)

    def test_agrees_with_ml_on_homoscedastic_data(self):
        d = _draw(rho=0.458, seed=14, rows=20, cols=20)
        g, m = fit_gs2sls_white(d.y, d.X, d.W), fit_sar(d.y, d.X, d.W)
        assert abs(g.rho - m.rho) < 2 * g.rho_se
        assert np.all(np.abs(g.beta - m.beta) < 2 * g.beta_se)

    def test_null_rho_z_scores(self):
        z = []
        for seed in range(100):
            d = _draw(seed=seed, rows=20, cols=20)
            g = fit_gs2sls_white(d.y, d.X, d.W)
            z.append(g.rho / g.rho_se)
        z = np.asarray(z)
        assert abs(z.mean()) < 0.3
        assert np.mean(np.abs(z) > 1.96) <= 0.1

    def test_w2x_and_conditioning(self):
        d = _draw(rho=0.3, seed=16)
        assert fit_gs2sls_white(d.y, d.X, d.W, w2x=True).rho is not None
        X = np.column_stack([d.X, d.X[:, 1] * (1 + 1e-13)])
        with pytest.raises(ConditioningError):
            fit_gs2sls_white(d.y, X, d.W)


def _lm_oracle(y, X, D):
    """Textbook LM statistics with dense matrices."""
    n = y.size
    M = np.eye(n) - X @ np.linalg.pinv(X)
    b = np.linalg.lstsq(X, y, rcond=None)[0]
    e = M @ y
    s2 = e @ e / n
    T = np.trace(D.T @ D + D @ D)
    WXb = D @ X @ b
    nJ = WXb @ M @ WXb / s2 + T
    de, dl = e @ D @ e / s2, e @ D @ y / s2
    return (de**2 / T, dl**2 / nJ,
            (de - T * dl / nJ) ** 2 / (T * (1 - T / nJ)), (dl - de) ** 2 / (nJ - T))


class TestLm:
    def test_path_graph_zero(self):
        W = build_weights(["a", "b", "c"], [("a", "b"), ("b", "c")])
        f = ols(np.array([1.0, 0.0, -1.0]), np.ones((3, 1)))
        np.testing.assert_allclose(f.resid, [1, 0, -1])
        rep = lm_tests(f, W)
        assert rep.lm_error[0] == 0.0
        assert np.isnan(rep.robust_lm_error[0]) and np.isnan(rep.robust_lm_lag[1])

    def test_dense_oracle(self):
        d = _draw(rho=0.2, seed=17)
        rep = lm_tests(ols(d.y, d.X), d.W)
        expected = _lm_oracle(d.y, d.X, d.W.dense())
        got = [rep.lm_error[0], rep.lm_lag[0], rep.robust_lm_error[0], rep.robust_lm_lag[0]]
        np.testing.assert_allclose(got, expected, rtol=1e-9)
        assert [r[0] for r in rep.rows()] == ["LM error", "LM lag", "Robust LM error", "Robust LM lag"]

    @given(st.integers(0, 2**31 - 1))
    def test_relabeling_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 36
        ids = [f"u{i}" for i in range(n)]
        base = lattice_weights(6, 6)
        pairs = [(ids[i], ids[j]) for i, nb in enumerate(base.neighbors) for j in nb if i < j]
        y = rng.standard_normal(n)
        X = np.column_stack([np.ones(n), rng.standard_normal(n)])
        perm = rng.permutation(n)
        W1 = build_weights(ids, pairs)
        W2 = build_weights([ids[i] for i in perm], pairs)
        a = lm_tests(ols(y, X), W1)
        b = lm_tests(ols(y[perm], X[perm]), W2)
        for u, v in zip(a.rows(), b.rows()):
            assert u[1] == pytest.approx(v[1], rel=1e-9, abs=1e-12)
            assert u[1] >= 0

    def test_dimension_mismatch(self):
        d = _draw(seed=18)
        with pytest.raises(ValueError):
            lm_tests(ols(d.y[:50], d.X[:50]), d.W)

    def test_strong_lag_regime(self):
        d = _draw(rho=0.6, seed=19, rows=30, cols=30)
        rep = lm_tests(ols(d.y, d.X), d.W)
        assert rep.lm_lag[0] > 100 and rep.robust_lm_lag[0] > 10
        assert rep.lm_lag[0] > rep.lm_error[0]

    @pytest.mark.slow
    def test_size(self):
        r = evaluate("lm", DgpSpec(rows=30, cols=30, seed=55), 500, workers=4)
        for rate in r.tests.values():
            assert 0.03 <= rate <= 0.07


class TestResidualAutocorr:
    def test_nonnegative_and_guards(self):
        d = _draw(rho=0.3, seed=20)
        f = fit_sar(d.y, d.X, d.W)
        stat, p = lm_residual_autocorr(f, d.W)
        assert stat >= 0 and 0 <= p <= 1
        with pytest.raises(ValueError):
            lm_residual_autocorr(fit_sem(d.y, d.X, d.W), d.W)

    @pytest.mark.slow
    def test_size_and_power(self):
        size = evaluate("lm_sar_resid", DgpSpec(rows=30, cols=30, rho=0.4, seed=8), 200, workers=4)
        power = evaluate("lm_sar_resid", DgpSpec(rows=30, cols=30, rho=0.4, lam=0.5, seed=9), 100, workers=4)
        assert 0.01 <= size.tests["lm_residual_autocorr"] <= 0.09
        assert power.tests["lm_residual_autocorr"] > 0.5


class TestImpacts:
    def test_rho_zero(self):
        m = impact_measures([0.5, -2.0], 0.0, W100, ["a", "b"])
        np.testing.assert_allclose(m.direct, [0.5, -2.0], rtol=1e-12)
        np.testing.assert_allclose(m.indirect, 0.0, atol=1e-12)

    @given(st.floats(-0.9, 0.95), st.lists(st.floats(-10, 10), min_size=1, max_size=4))
    def test_identities(self, rho, beta):
        names = [f"x{i}" for i in range(len(beta))]
        dense = impact_measures(beta, rho, W100, names)
        eigen = impact_measures(beta, rho, W100, names, method="eigen")
        b = np.asarray(beta)
        np.testing.assert_allclose(dense.direct + dense.indirect, dense.total, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(dense.total, b / (1 - rho), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(eigen.direct, dense.direct, rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(eigen.total, dense.total, rtol=1e-10, atol=1e-12)

    def test_reported_totals(self):
        m = impact_measures([0.594, 3.370], 0.458, W100, ["slr", "tax"])
        assert m["slr"][2] == pytest.approx(1.0971, rel=5e-3)
        assert m["tax"][2] == pytest.approx(6.2205, rel=5e-3)
        assert "variable\tdirect\tindirect\ttotal" in m.to_tsv()

    def test_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            impact_measures([1.0], 1.0, W100, ["a"])
        with pytest.raises(ValueError):
            impact_measures([1.0], 0.5, W100, ["a"], method="trace")

    def test_from_fit(self):
        d = _draw(rho=0.4, seed=21)
        f = fit_sar(d.y, d.X, d.W, names=["const", "a", "b"])
        m = impacts(f, d.W)
        assert m.names == ("a", "b")
        with pytest.raises(ValueError):
            impacts(fit_sem(d.y, d.X, d.W), d.W)
