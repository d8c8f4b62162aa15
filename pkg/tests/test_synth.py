import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrgrowth.synth import (
    ESTIMATORS,
    DgpSpec,
    evaluate,
    generate,
    generate_matching,
    lattice_weights,
)
from slrgrowth.weights import morans_i


class TestLattice:
    @pytest.mark.parametrize("rows,cols", [(1, 2), (3, 3), (4, 7)])
    def test_rook_link_count(self, rows, cols):
        W = lattice_weights(rows, cols)
        assert W.binary.nnz == 2 * (rows * (cols - 1) + cols * (rows - 1))

    def test_queen_corner(self):
        W = lattice_weights(3, 3, queen=True)
        assert len(W.neighbors[0]) == 3 and len(W.neighbors[4]) == 8


class TestGenerate:
    def test_deterministic(self):
        spec = DgpSpec(rows=6, cols=5, rho=0.3, lam=0.2, seed=4)
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.X, b.X)
        assert not np.array_equal(a.y, generate(DgpSpec(rows=6, cols=5, rho=0.3, lam=0.2, seed=5)).y)

    def test_no_spatial_terms(self):
        d = generate(DgpSpec(rows=5, cols=5, seed=1))
        np.testing.assert_array_equal(d.u, d.eps)
        np.testing.assert_allclose(d.y, d.X @ [1.0, 1.0, -1.0] + d.eps, rtol=0, atol=1e-14)

    @settings(max_examples=25)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.integers(0, 10_000))
    def test_reconstruction(self, rho, lam, seed):
        spec = DgpSpec(rows=6, cols=6, rho=rho, lam=lam, seed=seed, beta=(0.5, 2.0))
        d = generate(spec)
        D = d.W.dense()
        I = np.eye(d.W.n)
        np.testing.assert_allclose((I - rho * D) @ d.y - d.X @ [0.5, 2.0], d.u, atol=1e-10)
        np.testing.assert_allclose((I - lam * D) @ d.u, d.eps, atol=1e-10)
        assert d.truth == {"rho": rho, "lam": lam, "sigma2": 1.0, "beta0": 0.5, "beta1": 2.0}

    def test_hetero(self):
        d = generate(DgpSpec(rows=40, cols=40, hetero="covariate", seed=2))
        ratio = d.eps / np.abs(d.X[:, 1])
        assert ratio.std() == pytest.approx(1.0, abs=0.05)
        with pytest.raises(ValueError):
            generate(DgpSpec(rows=3, cols=3, hetero="group"))

    def test_infeasible(self):
        with pytest.raises(ValueError, match="infeasible"):
            generate(DgpSpec(rows=4, cols=4, rho=1.0))

    def test_large_lattice_autocorrelated(self):
        d = generate(DgpSpec(rows=55, cols=56, rho=0.458, lam=0.3, seed=3))
        r = morans_i(d.y, d.W)
        assert r.I > 0.2 and r.z > 10

    def test_from_mapping(self):
        s = DgpSpec.from_mapping({"rows": 3, "cols": 4, "beta": [1, 2], "rho": 0.1})
        assert s.n == 12 and s.beta == (1.0, 2.0)
        with pytest.raises(ValueError, match="unknown DGP keys: bogus"):
            DgpSpec.from_mapping({"bogus": 1})


class TestMatchingScenario:
    def test_shapes_and_effect(self):
        d = generate_matching(4000, effect=2.0, seed=1)
        assert set(np.unique(d.d)) == {0.0, 1.0}
        np.testing.assert_allclose(d.y - d.X @ [0.0, 1.0, 0.5] - 2.0 * d.d, d.eps, atol=1e-12)
        assert 0.15 < d.d.mean() < 0.35
        assert d.truth == {"att": 2.0}


def _noisy_truth(draw):
    # unbiased estimate with a correct standard error
    z = draw.eps[0]
    return {"params": {"rho": (draw.truth["rho"] + 0.1 * z, 0.1)}, "tests": {"t": float(z <= 1.6449)}}


class TestEvaluate:
    SPEC = DgpSpec(rows=5, cols=5, rho=0.2, seed=17)

    def test_minimum_replications(self):
        with pytest.raises(ValueError, match="at least 100"):
            evaluate(_noisy_truth, self.SPEC, 99)

    def test_worker_independence(self):
        a = evaluate("sar", self.SPEC, 100, workers=1)
        b = evaluate("sar", self.SPEC, 100, workers=4)
        assert a.to_tsv() == b.to_tsv()
        assert a.failures == 0 and a.replications == 100

    def test_summary_statistics(self):
        r = evaluate(_noisy_truth, self.SPEC, 400)
        row = r.params["rho"]
        assert row["truth"] == 0.2
        assert abs(row["bias"]) < 4 * 0.1 / np.sqrt(400)
        assert row["mean_se"] == pytest.approx(0.1)
        assert row["sd"] == pytest.approx(0.1, rel=0.15)
        assert 0.92 <= row["coverage"] <= 0.98
        # p-value below alpha when z > 1.645, so about 5% rejections
        assert 0.025 <= r.tests["t"] <= 0.075

    def test_failures_counted(self):
        def flaky(draw):
            if draw.eps[0] > 0:
                raise RuntimeError("boom")
            return _noisy_truth(draw)

        r = evaluate(flaky, self.SPEC, 100)
        assert 20 < r.failures < 80
        assert all(e.startswith("RuntimeError") for e in r.errors)
        assert "meta\tfailures\t" in r.to_tsv()

    def test_registry(self):
        assert {"sar", "sem", "sac", "gs2sls", "lm", "lm_sar_resid"} <= set(ESTIMATORS)
