"""Covariance estimation and hierarchical reconciliation."""

import io

import numpy as np
import pandas as pd
import pytest

from gridcast.errors import ConfigError, DataError, NumericError
from gridcast.forecasters.results import QuantileGrid
from gridcast.hierarchy import Hierarchy, build_hierarchy
from gridcast.reconciliation import (
    BaseForecastSet,
    CovarianceEstimate,
    estimate_graphical_lasso,
    estimate_ledoit_wolf,
    reconcile_bayes,
    reconcile_mint,
    reconcile_ols,
    reconcile_quantiles,
    reconciliation_matrix,
    save_reconciliation_matrix,
)


def small_hierarchy() -> Hierarchy:
    # One total over two bottom series.
    return Hierarchy(np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))


def identity_cov(n: int) -> CovarianceEstimate:
    return CovarianceEstimate(np.eye(n), "fixed", 0.0)


def random_pd(rng, n: int) -> np.ndarray:
    a = rng.normal(size=(n, 2 * n))
    return a @ a.T / (2 * n) + 0.1 * np.eye(n)


class TestLedoitWolf:
    def test_rejects_single_sample(self):
        with pytest.raises(DataError):
            estimate_ledoit_wolf(np.ones((1, 3)))

    def test_shrinkage_toward_own_target_is_noop(self):
        # Sample covariance of this design is exactly the identity.
        x = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        est = estimate_ledoit_wolf(x)
        np.testing.assert_array_equal(est.matrix, np.eye(2))
        assert est.regularization == 0.0

    def test_two_samples_many_series_shrinks_heavily(self):
        # In the rank-deficient regime the closed-form intensity sits
        # near (m - 1) / m, i.e. about one half at two samples; far
        # above the near-zero intensity of the well-sampled regime.
        rng = np.random.default_rng(0)
        est = estimate_ledoit_wolf(rng.normal(size=(2, 50)))
        assert 0.4 < est.regularization <= 1.0
        rng = np.random.default_rng(0)
        spread = np.linspace(0.5, 3.0, 50)
        well_sampled = estimate_ledoit_wolf(rng.normal(size=(5000, 50)) * spread)
        assert well_sampled.regularization < 0.05

    def test_matches_naive_loop_implementation(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 5)) * np.array([1.0, 2.0, 0.5, 1.5, 3.0])
        m, n = x.shape
        xc = x  # errors are treated as zero-mean
        sample = xc.T @ xc / m
        mu = np.trace(sample) / n
        d2 = ((sample - mu * np.eye(n)) ** 2).sum() / n
        b2 = 0.0
        for k in range(m):
            outer = np.outer(xc[k], xc[k])
            b2 += ((outer - sample) ** 2).sum() / n
        b2 = min(b2 / m**2, d2)
        delta = b2 / d2
        expected = (1 - delta) * sample + delta * mu * np.eye(n)
        est = estimate_ledoit_wolf(x)
        assert est.regularization == pytest.approx(delta, rel=1e-12)
        np.testing.assert_allclose(est.matrix, expected, rtol=1e-12, atol=1e-15)

    def test_large_sample_recovers_diagonal_gaussian(self):
        rng = np.random.default_rng(2)
        std = np.array([1.0, 2.0, 0.5])
        x = rng.normal(size=(100_000, 3)) * std
        est = estimate_ledoit_wolf(x)
        np.testing.assert_allclose(np.diag(est.matrix), std**2, rtol=0.05)
        off = est.matrix[~np.eye(3, dtype=bool)]
        assert np.abs(off).max() < 0.05 * (std**2).mean()

    def test_intensity_within_unit_interval(self):
        rng = np.random.default_rng(3)
        for m in (2, 5, 200):
            est = estimate_ledoit_wolf(rng.normal(size=(m, 4)))
            assert 0.0 <= est.regularization <= 1.0

    def test_output_bitwise_symmetric_and_positive_definite(self):
        rng = np.random.default_rng(4)
        est = estimate_ledoit_wolf(rng.normal(size=(30, 6)))
        np.testing.assert_array_equal(est.matrix, est.matrix.T)
        assert np.linalg.eigvalsh(est.matrix)[0] > 0


class TestGraphicalLasso:
    def test_zero_penalty_matches_sample_covariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(200, 4)) @ random_pd(rng, 4)
        sample = x.T @ x / x.shape[0]
        est = estimate_graphical_lasso(x, penalty=0.0)
        np.testing.assert_allclose(est.matrix, sample, rtol=1e-6)

    def test_large_penalty_gives_exactly_sparse_precision(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(100, 4))
        sample = x.T @ x / x.shape[0]
        lam = 10.0 * np.abs(sample[~np.eye(4, dtype=bool)]).max()
        est = estimate_graphical_lasso(x, penalty=lam)
        off = ~np.eye(4, dtype=bool)
        assert (est.precision[off] == 0.0).all()
        assert (est.matrix[off] == 0.0).all()
        np.testing.assert_array_equal(np.diag(est.matrix), np.diag(sample))

    def test_two_by_two_matches_soft_threshold_formula(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(300, 2))
        x[:, 1] += 0.6 * x[:, 0]
        sample = x.T @ x / x.shape[0]
        s12 = sample[0, 1]
        for lam in (0.25 * abs(s12), 0.9 * abs(s12), 2.0 * abs(s12)):
            est = estimate_graphical_lasso(x, penalty=lam)
            w12 = np.sign(s12) * max(abs(s12) - lam, 0.0)
            assert est.matrix[0, 0] == pytest.approx(sample[0, 0], rel=1e-10)
            assert est.matrix[1, 1] == pytest.approx(sample[1, 1], rel=1e-10)
            assert est.matrix[0, 1] == pytest.approx(w12, abs=1e-9 * abs(s12))

    def test_default_penalty_scales_with_offdiagonal(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(500, 3)) @ random_pd(rng, 3)
        sample = x.T @ x / x.shape[0]
        expected = 0.01 * np.abs(sample[~np.eye(3, dtype=bool)]).mean()
        est = estimate_graphical_lasso(x)
        assert est.regularization == pytest.approx(expected, rel=1e-12)

    def test_nonconvergence_reports_duality_gap(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(50, 3))
        with pytest.raises(NumericError, match="duality gap"):
            estimate_graphical_lasso(x, penalty=0.01, max_sweeps=0)

    def test_output_bitwise_symmetric(self):
        rng = np.random.default_rng(10)
        est = estimate_graphical_lasso(rng.normal(size=(80, 5)))
        np.testing.assert_array_equal(est.matrix, est.matrix.T)
        np.testing.assert_array_equal(est.precision, est.precision.T)

    def test_precision_inverts_covariance(self):
        rng = np.random.default_rng(11)
        est = estimate_graphical_lasso(rng.normal(size=(200, 4)), penalty=0.001)
        np.testing.assert_allclose(
            est.matrix @ est.precision, np.eye(4), atol=1e-6
        )


class TestCovarianceEstimate:
    def test_rejects_asymmetric(self):
        with pytest.raises(ConfigError):
            CovarianceEstimate(np.array([[1.0, 0.2], [0.1, 1.0]]), "fixed", 0.0)

    def test_rejects_indefinite(self):
        with pytest.raises(NumericError):
            CovarianceEstimate(np.zeros((2, 2)), "fixed", 0.0)


class TestOls:
    def test_worked_three_series_example(self):
        h = small_hierarchy()
        rec = reconcile_ols(BaseForecastSet(np.array([[10.0, 3.0, 4.0]])), h)
        np.testing.assert_allclose(rec.bottom, [[4.0, 5.0]], atol=1e-12)
        np.testing.assert_allclose(rec.full, [[9.0, 4.0, 5.0]], atol=1e-12)

    def test_coherent_input_is_fixed_point(self):
        rng = np.random.default_rng(12)
        h = build_hierarchy(8, (2, 4))
        full = h.aggregate(rng.normal(size=(6, 8)))
        rec = reconcile_ols(BaseForecastSet(full), h)
        np.testing.assert_allclose(rec.full, full, atol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(13)
        h = build_hierarchy(4, (2,))
        rec1 = reconcile_ols(BaseForecastSet(rng.normal(size=(5, 7))), h)
        rec2 = reconcile_ols(BaseForecastSet(rec1.full), h)
        np.testing.assert_allclose(rec2.full, rec1.full, atol=1e-10)

    def test_zero_forecasts_stay_zero(self):
        h = small_hierarchy()
        rec = reconcile_ols(BaseForecastSet(np.zeros((3, 3))), h)
        np.testing.assert_array_equal(rec.full, np.zeros((3, 3)))

    def test_exact_coherence(self):
        rng = np.random.default_rng(14)
        h = build_hierarchy(8, (2, 4))
        rec = reconcile_ols(BaseForecastSet(rng.normal(size=(10, 15)) * 50), h)
        assert h.coherence_gap(rec.full) < 1e-12

    def test_rejects_wrong_width(self):
        with pytest.raises(ConfigError):
            reconcile_ols(BaseForecastSet(np.zeros((2, 4))), small_hierarchy())


class TestMint:
    def test_identity_weight_equals_ols(self):
        rng = np.random.default_rng(15)
        h = build_hierarchy(8, (2, 4))
        base = BaseForecastSet(rng.normal(size=(7, 15)) * 30)
        rec_w = reconcile_mint(base, h, identity_cov(15))
        rec_o = reconcile_ols(base, h)
        np.testing.assert_array_equal(rec_w.bottom, rec_o.bottom)

    def test_distrusted_top_forecast_is_ignored(self):
        h = small_hierarchy()
        cov = CovarianceEstimate(np.diag([1e6, 1.0, 1.0]), "fixed", 0.0)
        base = BaseForecastSet(np.array([[10.0, 3.0, 4.0]]))
        rec = reconcile_mint(base, h, cov)
        np.testing.assert_allclose(rec.bottom, [[3.0, 4.0]], atol=1e-4)

    def test_coherent_input_is_fixed_point(self):
        rng = np.random.default_rng(16)
        h = build_hierarchy(4, (2,))
        w = random_pd(rng, 7)
        full = h.aggregate(rng.normal(size=(5, 4)))
        rec = reconcile_mint(
            BaseForecastSet(full), h, CovarianceEstimate(w, "fixed", 0.0)
        )
        np.testing.assert_allclose(rec.full, full, atol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(17)
        h = build_hierarchy(4, (2,))
        cov = CovarianceEstimate(random_pd(rng, 7), "fixed", 0.0)
        rec1 = reconcile_mint(BaseForecastSet(rng.normal(size=(5, 7))), h, cov)
        rec2 = reconcile_mint(BaseForecastSet(rec1.full), h, cov)
        np.testing.assert_allclose(rec2.full, rec1.full, atol=1e-10)

    def test_beats_ols_under_known_covariance(self):
        # With a strongly anisotropic error covariance the weighted
        # projection must reduce reconciled squared error versus the
        # plain one; checked on simulated draws with a one-sided t test.
        rng = np.random.default_rng(18)
        h = small_hierarchy()
        w_true = np.array([[4.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 2.0]])
        cov = CovarianceEstimate(w_true, "fixed", 0.0)
        truth = h.aggregate(np.array([3.0, 4.0]))
        chol = np.linalg.cholesky(w_true)
        draws = 10_000
        noise = rng.normal(size=(draws, 3)) @ chol.T
        base = BaseForecastSet(truth + noise)
        err_mint = reconcile_mint(base, h, cov).full - truth
        err_ols = reconcile_ols(base, h).full - truth
        diff = (err_ols**2).sum(axis=1) - (err_mint**2).sum(axis=1)
        assert err_mint.var() <= err_ols.var()
        t_stat = diff.mean() / (diff.std(ddof=1) / np.sqrt(draws))
        assert t_stat > 1.645

    def test_ill_conditioned_weight_warns_and_still_reconciles(self):
        h = small_hierarchy()
        # Nearly singular but still positive definite weight.
        w = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0 - 1e-15], [0.0, 1.0 - 1e-15, 1.0]])
        w = (w + w.T) / 2
        cov = CovarianceEstimate(w, "fixed", 0.0)
        base = BaseForecastSet(np.array([[10.0, 3.0, 4.0]]))
        with pytest.warns(UserWarning, match="condition number"):
            rec = reconcile_mint(base, h, cov)
        assert np.isfinite(rec.full).all()
        assert h.coherence_gap(rec.full) < 1e-9


class TestBayes:
    def test_worked_three_series_example(self):
        h = small_hierarchy()
        w = np.eye(3)  # upper block 1x1 is sigma_u = 1, bottom block identity
        cov = CovarianceEstimate(w, "fixed", 0.0)
        base = BaseForecastSet(np.array([[10.0, 3.0, 4.0]]))
        rec = reconcile_bayes(base, h, cov)
        np.testing.assert_allclose(rec.bottom, [[4.0, 5.0]], atol=1e-12)
        expected_posterior = np.array([[2 / 3, -1 / 3], [-1 / 3, 2 / 3]])
        np.testing.assert_allclose(
            rec.posterior_covariance, expected_posterior, atol=1e-12
        )

    def test_coherent_input_has_zero_innovation(self):
        rng = np.random.default_rng(19)
        h = build_hierarchy(4, (2,))
        full = h.aggregate(rng.normal(size=(5, 4)))
        rec = reconcile_bayes(
            BaseForecastSet(full), h, identity_cov(7)
        )
        np.testing.assert_array_equal(rec.bottom, full[:, 3:])

    def test_uninformative_upper_level_keeps_bottom(self):
        h = small_hierarchy()
        w = np.diag([1e12, 1.0, 1.0])
        cov = CovarianceEstimate(w, "fixed", 0.0)
        base = BaseForecastSet(np.array([[10.0, 3.0, 4.0]]))
        rec = reconcile_bayes(base, h, cov)
        np.testing.assert_allclose(rec.bottom, [[3.0, 4.0]], atol=1e-9)

    def test_agrees_with_weighted_projection_for_block_diagonal(self):
        rng = np.random.default_rng(20)
        h = build_hierarchy(4, (2,))
        for _ in range(20):
            w = np.zeros((7, 7))
            w[:3, :3] = random_pd(rng, 3)
            w[3:, 3:] = random_pd(rng, 4)
            cov = CovarianceEstimate((w + w.T) / 2, "fixed", 0.0)
            base = BaseForecastSet(rng.normal(size=(3, 7)) * 10)
            rec_b = reconcile_bayes(base, h, cov)
            rec_m = reconcile_mint(base, h, cov)
            np.testing.assert_allclose(rec_b.bottom, rec_m.bottom, atol=1e-8)

    def test_cross_covariance_flag_changes_result(self):
        rng = np.random.default_rng(21)
        h = small_hierarchy()
        w = random_pd(rng, 3)
        cov = CovarianceEstimate(w, "fixed", 0.0)
        base = BaseForecastSet(np.array([[10.0, 3.0, 4.0]]))
        rec_block = reconcile_bayes(base, h, cov)
        rec_cross = reconcile_bayes(base, h, cov, include_cross_covariance=True)
        assert not np.allclose(rec_block.bottom, rec_cross.bottom)
        assert h.coherence_gap(rec_cross.full) < 1e-12

    def test_exact_coherence(self):
        rng = np.random.default_rng(22)
        h = build_hierarchy(8, (2, 4))
        rec = reconcile_bayes(
            BaseForecastSet(rng.normal(size=(6, 15)) * 40), h, identity_cov(15)
        )
        assert h.coherence_gap(rec.full) < 1e-12


class TestReconciliationMatrix:
    def test_matrix_reproduces_method_output(self):
        rng = np.random.default_rng(23)
        h = build_hierarchy(4, (2,))
        cov = CovarianceEstimate(random_pd(rng, 7), "fixed", 0.0)
        base = BaseForecastSet(rng.normal(size=(4, 7)))
        for method, rec in (
            ("ols", reconcile_ols(base, h)),
            ("mint", reconcile_mint(base, h, cov)),
            ("bayes", reconcile_bayes(base, h, cov)),
        ):
            m = reconciliation_matrix(h, method, cov)
            np.testing.assert_allclose(base.forecasts @ m.T, rec.full, atol=1e-10)

    def test_errors_transform_like_forecasts(self):
        # Coherent truths are fixed points, so the residuals of the
        # reconciled forecasts are the reconciled residuals.
        rng = np.random.default_rng(24)
        h = build_hierarchy(4, (2,))
        cov = CovarianceEstimate(random_pd(rng, 7), "fixed", 0.0)
        truth = h.aggregate(rng.normal(size=(5, 4)))
        resid = rng.normal(size=(5, 7))
        base = BaseForecastSet(truth + resid)
        m = reconciliation_matrix(h, "mint", cov)
        rec = reconcile_mint(base, h, cov)
        np.testing.assert_allclose(rec.full - truth, resid @ m.T, atol=1e-10)

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            reconciliation_matrix(small_hierarchy(), "average")

    def test_weighted_methods_require_covariance(self):
        with pytest.raises(ConfigError):
            reconciliation_matrix(small_hierarchy(), "mint")

    def test_csv_round_trip(self, tmp_path):
        h = build_hierarchy(4, (2,))
        m = reconciliation_matrix(h, "ols")
        path = tmp_path / "map.csv"
        save_reconciliation_matrix(path, m, h)
        back = pd.read_csv(path, index_col="series")
        assert list(back.index) == list(h.names)
        assert list(back.columns) == list(h.names)
        np.testing.assert_allclose(back.to_numpy(), m, rtol=1e-12, atol=1e-15)


class TestReconcileQuantiles:
    def test_zero_residuals_collapse_fan(self):
        grid = QuantileGrid(np.array([0.1, 0.5, 0.9]))
        mean = np.arange(6.0).reshape(2, 3)
        with pytest.warns(UserWarning, match="pooled"):
            result = reconcile_quantiles(
                mean, np.array([0, 144]), np.zeros((40, 3)),
                np.zeros(40, dtype=int), 144, grid,
            )
        for level in range(3):
            np.testing.assert_array_equal(result.quantiles[level], mean)

    def test_fans_monotone_in_level(self):
        rng = np.random.default_rng(25)
        grid = QuantileGrid()
        errors = rng.normal(size=(500, 4))
        sod = rng.integers(0, 24, size=500)
        mean = rng.normal(size=(3, 4))
        result = reconcile_quantiles(
            mean, np.array([24, 25, 26]), errors, sod, 24, grid
        )
        assert (np.diff(result.quantiles, axis=0) >= 0).all()

    def test_training_coverage_matches_level(self):
        rng = np.random.default_rng(26)
        grid = QuantileGrid(np.array([0.05, 0.5, 0.95]))
        errors = rng.normal(size=(2000, 1))
        sod = np.zeros(2000, dtype=int)
        point = 10.0
        with pytest.warns(UserWarning, match="pooled"):
            result = reconcile_quantiles(
                np.full((1, 1), point), np.array([0]), errors, sod, 24, grid
            )
        # Training truths are point - e; count how many sit under each line.
        truths = point - errors[:, 0]
        for k, alpha in enumerate(grid.levels):
            covered = (truths <= result.quantiles[k, 0, 0]).mean()
            assert covered == pytest.approx(alpha, abs=0.02)
