import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal
from scipy.linalg import hadamard
from statsmodels.stats.outliers_influence import OLSInfluence, variance_inflation_factor

from gwroute.dataset import SpatialDataset, distance_matrix
from gwroute.diagnostics import (
    _cn_vdp,
    build_weight_matrix,
    global_collinearity,
    gw_correlation,
    local_collinearity,
    morans_i,
    parse_scheme,
    standardized_residuals,
)
from gwroute.errors import UserInputError
from gwroute.global_models import fit_ols
from gwroute.kernel import Bandwidth, KernelSpec, weight_rows

from _oracles import moran_brute
from conftest import random_dataset


@pytest.fixture(scope="module")
def grid40():
    g = np.arange(8) * 10.0
    coords = np.array([(a, b) for a in g for b in g[:5]])
    return distance_matrix(coords)


class TestWeights:
    def test_knn_rows(self, grid40):
        w = build_weight_matrix(grid40, "knn:4")
        W = w.w.toarray()
        assert_array_equal(np.diag(W), 0)
        assert_allclose(W.sum(1), 1.0)
        assert np.all(np.count_nonzero(W, axis=1) == 4)
        # the 4 chosen neighbours are among the nearest by distance
        for i in range(grid40.n):
            chosen = np.flatnonzero(W[i])
            others = np.setdiff1d(np.arange(grid40.n), np.append(chosen, i))
            assert grid40.d[i, chosen].max() <= grid40.d[i, others].min()
        assert w.scheme == "knn(4)"

    def test_unstandardized_binary(self, grid40):
        W = build_weight_matrix(grid40, "distance_band:10", row_standardize=False).w.toarray()
        assert_array_equal(W, W.T)
        assert set(np.unique(W)) == {0.0, 1.0}
        assert W[0].sum() == 2      # corner cell

    def test_islands(self):
        dm = distance_matrix(np.array([[0.0, 0], [1, 0], [50, 50], [0, 1]]))
        with pytest.warns(UserWarning, match="no neighbours"):
            w = build_weight_matrix(dm, "distance_band:2")
        assert w.islands == [2]
        assert w.w.toarray()[2].sum() == 0

    def test_parse(self):
        assert parse_scheme("knn:6") == ("knn", 6)
        assert parse_scheme("inverse_distance:2") == ("inverse_distance", 2.0)
        with pytest.raises(UserInputError):
            parse_scheme("queen")


class TestMoran:
    def test_statistic_matches_brute_force(self, grid40):
        w = build_weight_matrix(grid40, "inverse_distance:1", row_standardize=False)
        v = np.random.default_rng(0).normal(size=40)
        res = morans_i(v, w)
        assert res.I == pytest.approx(moran_brute(v, w.w.toarray()), rel=1e-12)
        assert res.expectation == -1 / 39

    @given(st.floats(1e-3, 1e3))
    def test_invariant_to_weight_scale(self, c):
        dm = distance_matrix(np.random.default_rng(1).uniform(size=(25, 2)))
        w = build_weight_matrix(dm, "knn:5")
        v = np.random.default_rng(2).normal(size=25)
        a, b = morans_i(v, w), morans_i(v, w.scaled(c))
        assert b.I == pytest.approx(a.I, rel=1e-10)
        assert b.z == pytest.approx(a.z, rel=1e-9)

    def test_raw_moments_monte_carlo(self, grid40):
        w = build_weight_matrix(grid40, "knn:6")
        rng = np.random.default_rng(3)
        sims = np.array([morans_i(rng.normal(size=40), w).I for _ in range(4000)])
        ref = morans_i(rng.normal(size=40), w)
        se_mean = np.sqrt(ref.variance / sims.size)
        assert abs(sims.mean() - ref.expectation) < 4 * se_mean
        assert sims.var() == pytest.approx(ref.variance, rel=0.08)

    def test_residual_adjusted_moments_monte_carlo(self, grid40):
        w = build_weight_matrix(grid40, "knn:6")
        rng = np.random.default_rng(4)
        X = np.column_stack([np.ones(40), rng.normal(size=(40, 2))])
        H = X @ np.linalg.pinv(X)
        ref = None
        sims = []
        for _ in range(4000):
            e = rng.normal(size=40)
            r = e - H @ e
            res = morans_i(r, w, mode="residual_adjusted", X=X)
            sims.append(res.I)
            ref = res
        sims = np.array(sims)
        assert ref.expectation < -1 / 39      # regression pushes E[I] further negative
        assert abs(sims.mean() - ref.expectation) < 4 * np.sqrt(ref.variance / sims.size)
        assert sims.var() == pytest.approx(ref.variance, rel=0.08)

    def test_iid_residuals_rarely_significant(self, grid40):
        w = build_weight_matrix(grid40, "knn:8")
        rng = np.random.default_rng(5)
        X = np.column_stack([np.ones(40), rng.normal(size=40)])
        z = []
        for _ in range(100):
            y = X @ [1.0, 2.0] + rng.normal(size=40)
            e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
            z.append(morans_i(e, w, "residual_adjusted", X=X).z)
        assert np.sum(np.abs(z) < 3) >= 99

    def test_trend_detected(self, grid40):
        w = build_weight_matrix(grid40, "knn:4")
        res = morans_i(grid40.coords[:, 0], w, permutations=199, seed=1)
        assert res.z > 5 and res.p_value < 1e-6
        assert res.p_permutation == pytest.approx(1 / 200)
        again = morans_i(grid40.coords[:, 0] + 0.0, w, permutations=199, seed=1)
        assert again.p_permutation == res.p_permutation

    def test_errors(self, grid40):
        w = build_weight_matrix(grid40, "knn:4")
        with pytest.raises(UserInputError):
            morans_i(np.ones(40), w)
        with pytest.raises(UserInputError):
            morans_i(np.arange(40.0), w, mode="residual_adjusted")
        with pytest.raises(UserInputError):
            morans_i(np.arange(39.0), w)


class TestCollinearity:
    def test_orthogonal_design(self):
        Hd = hadamard(8).astype(float)
        coords = np.random.default_rng(0).uniform(size=(8, 2))
        ds = SpatialDataset(coords, np.arange(8.0), Hd[:, 1:4], ("a", "b", "c"))
        rep = global_collinearity(ds)
        assert rep.condition_number == pytest.approx(1.0, abs=1e-12)
        assert_allclose(rep.vif, 1.0, atol=1e-12)
        assert rep.flags == []

    def test_duplicate_column_is_infinite(self):
        ds = random_dataset(30, 2, seed=1)
        P = np.column_stack([ds.predictors, ds.predictors[:, 0]])
        dup = SpatialDataset(ds.coords, ds.response, P, ("x1", "x2", "x1b"),
                             allow_duplicate_columns=True)
        rep = global_collinearity(dup)
        assert rep.condition_number == np.inf
        assert rep.vif[0] == np.inf and rep.vif[2] == np.inf
        assert ["x1", "x1b"] in rep.dependencies
        assert any("VIF" in f for f in rep.flags)

    def test_vif_matches_statsmodels(self):
        rng = np.random.default_rng(2)
        P = rng.normal(size=(50, 3))
        P[:, 2] += 0.9 * P[:, 0]
        ds = SpatialDataset(rng.uniform(size=(50, 2)), rng.normal(size=50), P, ("a", "b", "c"))
        X, _ = ds.design()
        ref = [variance_inflation_factor(X, k) for k in (1, 2, 3)]
        assert_allclose(global_collinearity(ds).vif, ref, rtol=1e-10)

    @given(arrays(np.float64, (12, 3), elements=st.floats(-10, 10)))
    def test_vdp_columns_sum_to_one(self, P):
        X = np.column_stack([np.ones(12), P])
        if np.linalg.matrix_rank(X) < 4:
            return
        cn, ci, vdp, _ = _cn_vdp(X, ["Intercept", "a", "b", "c"])
        assert_allclose(vdp.sum(0), 1.0, rtol=1e-9)
        assert cn >= 1.0
        assert ci.max() == pytest.approx(cn)

    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, a, b):
        ds = random_dataset(30, 2, seed=3)
        scaled = SpatialDataset(ds.coords, ds.response, ds.predictors * [a, b], ds.predictor_names)
        r0, r1 = global_collinearity(ds), global_collinearity(scaled)
        assert r1.condition_number == pytest.approx(r0.condition_number, rel=1e-8)
        assert_allclose(r1.vif, r0.vif, rtol=1e-8)

    def test_needs_two_predictors(self):
        with pytest.raises(UserInputError):
            global_collinearity(random_dataset(20, 1))


class TestLocal:
    def test_global_window_matches_global(self, ds60):
        rep = local_collinearity(ds60, spec=KernelSpec("boxcar", Bandwidth.adaptive(60)))
        g = global_collinearity(ds60)
        assert_allclose(rep.local_cn, g.condition_number, rtol=1e-10)
        assert_allclose(rep.local_vif, np.tile(g.vif, (60, 1)), rtol=1e-10)
        assert_allclose(rep.gw_correlations[("x1", "x2")], g.correlations[0, 1], rtol=1e-10)
        assert rep.singular_locations == []

    def test_self_correlation_is_one(self, ds60):
        W = weight_rows(distance_matrix(ds60), KernelSpec("bisquare", Bandwidth.adaptive(15)))
        x = ds60.column("x1")
        assert_allclose(gw_correlation(x, x, W), 1.0, rtol=1e-12)
        assert_allclose(gw_correlation(x, -2 * x + 1, W), -1.0, rtol=1e-12)

    def test_summary_dict(self, ds60):
        rep = local_collinearity(ds60, spec=KernelSpec("bisquare", Bandwidth.adaptive(20)))
        d = rep.summary_dict()
        assert d["local_cn"]["max"] >= d["local_cn"]["median"] >= 1


class TestStandardizedResiduals:
    def test_matches_statsmodels(self, ds60):
        import statsmodels.api as sm
        X, _ = ds60.design()
        ref = OLSInfluence(sm.OLS(ds60.response, X).fit()).resid_studentized_internal
        out = standardized_residuals(fit_ols(ds60))
        assert_allclose(out.values, ref, rtol=1e-10)
        assert out.excluded == []

    def test_outlier_flagged(self, ds60):
        y = ds60.response.copy()
        y[7] += 25
        ds = SpatialDataset(ds60.coords, y, ds60.predictors, ds60.predictor_names)
        out = standardized_residuals(fit_ols(ds))
        assert out.flags[7]
        assert out.n_flagged == 1

    def test_leverage_one_excluded(self):
        with pytest.warns(UserWarning, match="leverage"):
            out = standardized_residuals(residuals=[0.0, 1.0, -1.0], sigma2=1.0,
                                         hat_diag=[1.0, 0.2, 0.2])
        assert out.excluded == [0]
        assert np.isnan(out.values[0])
