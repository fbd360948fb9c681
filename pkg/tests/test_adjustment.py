"""Leave-one-out prediction assembly across backends."""

import numpy as np
import pytest

from survace.adjustment import MuPair, fit_adjustment, loo_matrix, predict_pair
from survace.forest import ForestConfig
from survace.simulation import DgpSetting, gen_cohort
from survace.survival import Cohort


class ConstantModel:
    """Test stub: predicts the same survival value everywhere."""

    def __init__(self, value):
        self.value = value

    def predict(self, times, x):
        x = np.atleast_2d(x)
        return np.full((x.shape[0], len(np.atleast_1d(times))), self.value)


def toy_cohort(rng, n=30, p=4):
    return gen_cohort(DgpSetting(n=n, p=p, k=p, beta=0.3, s0=0.4, s1=0.4), rng)


class TestPredictPair:
    def test_constant_models_fill_rows(self):
        cohort = toy_cohort(np.random.default_rng(0))
        mu = predict_pair(ConstantModel(0.7), ConstantModel(0.4), [0.5], cohort)
        assert np.all(mu.mu1 == 0.7)
        assert np.all(mu.mu0 == 0.4)
        assert mu.n == cohort.n

    def test_time_zero_rows_are_one(self):
        cohort = toy_cohort(np.random.default_rng(1))
        m1, m0 = fit_adjustment(cohort, "srf", seed=2,
                                forest_config=ForestConfig(n_trees=40))
        mu = predict_pair(m1, m0, [0.0], cohort)
        assert np.all(mu.mu1 == 1.0) and np.all(mu.mu0 == 1.0)

    def test_srf_rows_do_not_read_outcomes(self):
        # mutating a subject's outcome must not change stored-forest predictions
        cohort = toy_cohort(np.random.default_rng(2))
        m1, m0 = fit_adjustment(cohort, "srf", seed=3,
                                forest_config=ForestConfig(n_trees=60))
        mu_before = predict_pair(m1, m0, [0.4, 0.8], cohort)
        y2 = cohort.y.copy()
        y2[5] = y2[5] + 10.0
        mutated = Cohort(y2, cohort.delta, cohort.z, cohort.x)
        mu_after = predict_pair(m1, m0, [0.4, 0.8], mutated)
        assert np.array_equal(mu_before.mu1, mu_after.mu1)
        assert np.array_equal(mu_before.mu0, mu_after.mu0)

    def test_srf_own_arm_rows_use_oob(self):
        cohort = toy_cohort(np.random.default_rng(3))
        m1, m0 = fit_adjustment(cohort, "srf", seed=4,
                                forest_config=ForestConfig(n_trees=80))
        times = [0.5]
        mu = predict_pair(m1, m0, times, cohort)
        oob1 = m1.oob_matrix(times)
        full1 = np.clip(m1.predict(times, cohort.x), 0, 1)
        arm1_rows = m1.arm_indices
        np.testing.assert_array_equal(mu.mu1[arm1_rows], oob1)
        other = np.setdiff1d(np.arange(cohort.n), arm1_rows)
        np.testing.assert_array_equal(mu.mu1[other], full1[other])

    def test_cox_backend_uses_full_fit_for_loo(self):
        cohort = toy_cohort(np.random.default_rng(4), n=60, p=2)
        m1, m0 = fit_adjustment(cohort, "cox", seed=0)
        times = [0.3, 0.6]
        got = loo_matrix(m1, times, cohort)
        np.testing.assert_array_equal(got, np.clip(m1.predict(times, cohort.x), 0, 1))

    def test_column_lookup_requires_exact_time(self):
        mu = MuPair([0.5, 1.0], np.ones((3, 2)), np.ones((3, 2)))
        mu.column(0.5)
        with pytest.raises(IndexError):
            mu.column(0.75)


class TestBackendSelection:
    def test_unknown_backend_rejected(self):
        cohort = toy_cohort(np.random.default_rng(5))
        with pytest.raises(ValueError, match="unknown backend"):
            fit_adjustment(cohort, "boost")

    def test_lasso_backend_round_trip(self):
        cohort = toy_cohort(np.random.default_rng(6), n=80)
        m1, m0 = fit_adjustment(cohort, "lasso", seed=0, cv_folds=3)
        mu = predict_pair(m1, m0, [0.2, 0.5], cohort)
        assert np.all((0 <= mu.mu1) & (mu.mu1 <= 1))
        assert np.all(np.diff(mu.mu1, axis=1) <= 1e-12)

    def test_lasso_predictions_monotone_on_dense_grid(self):
        cohort = toy_cohort(np.random.default_rng(7), n=80)
        m1, _ = fit_adjustment(cohort, "lasso", seed=0, cv_folds=3)
        grid = np.linspace(0.0, float(cohort.y.max()) * 1.1, 50)
        preds = m1.predict(grid, cohort.x[:6])
        assert np.all((0 <= preds) & (preds <= 1))
        assert np.all(np.diff(preds, axis=1) <= 1e-12)
