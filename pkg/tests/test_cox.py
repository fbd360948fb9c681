"""Cox partial-likelihood fitter and its Breslow baseline."""

import numpy as np
import pytest

from survace.cox import CoxConvergenceError, _PartialLikelihood, fit_cox
from survace.survival import Cohort, km_fit


def partial_loglik_oracle(y, delta, x, beta):
    """Direct O(n^2) Breslow partial log likelihood for a 1-covariate design."""
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    ll = 0.0
    for i in range(len(y)):
        if delta[i] == 1:
            risk = np.exp(beta * x[y >= y[i]]).sum()
            ll += beta * x[i] - np.log(risk)
    return ll


def make_arm_cohort(y, delta, x):
    n = len(y)
    x = np.asarray(x, float).reshape(n, -1)
    return Cohort(y, delta, np.ones(n, dtype=int), x)


class TestFitCox:
    def test_constant_covariate_raises_singular(self):
        cohort = make_arm_cohort([1, 2, 3, 4], [1, 1, 1, 0], np.ones(4))
        with pytest.raises(CoxConvergenceError, match="singular"):
            fit_cox(cohort, arm=1)

    def test_hand_solved_score_equation(self):
        # events at t=1 (x=1) and t=2 (x=0), censored at 3 (x=1):
        # score zero at exp(2b) = 1/2, so b = -log(2)/2
        cohort = make_arm_cohort([1.0, 2.0, 3.0], [1, 1, 0], [1.0, 0.0, 1.0])
        fit = fit_cox(cohort, arm=1)
        assert fit.coefficients[0] == pytest.approx(-0.5 * np.log(2), abs=1e-8)
        assert fit.grad_norm < 1e-8

        # grid-search oracle on the same likelihood
        grid = np.linspace(-2, 2, 40001)
        lls = [partial_loglik_oracle(cohort.y, cohort.delta, cohort.x[:, 0], b)
               for b in grid]
        assert fit.coefficients[0] == pytest.approx(grid[int(np.argmax(lls))], abs=1e-4)

    def test_null_model_predicts_arm_km(self):
        rng = np.random.default_rng(42)
        y = rng.exponential(size=30)
        delta = rng.integers(0, 2, size=30)
        cohort = Cohort(y, delta, np.ones(30, dtype=int), np.zeros((30, 0)))
        fit = fit_cox(cohort, arm=1)
        km = km_fit(y, delta)
        for t in np.linspace(0, y.max(), 25):
            assert fit.predict_at(t, np.zeros((1, 0)))[0] == pytest.approx(km(t), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        n, p = 40, 3
        x = rng.normal(size=(n, p))
        y = rng.exponential(scale=np.exp(-x[:, 0] * 0.5))
        delta = rng.integers(0, 2, size=n)
        delta[0] = 1
        pl = _PartialLikelihood(y, delta, x)
        h = 1e-5
        for _ in range(10):
            beta = rng.normal(scale=0.5, size=p)
            _, grad = pl.loglik_grad(beta)
            for j in range(p):
                e = np.zeros(p)
                e[j] = h
                fd = (pl.loglik(beta + e) - pl.loglik(beta - e)) / (2 * h)
                assert grad[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_predictions_monotone_in_bounds(self):
        rng = np.random.default_rng(9)
        n, p = 60, 4
        x = rng.normal(size=(n, p))
        y = rng.exponential(scale=np.exp(-(x @ np.array([0.8, -0.4, 0.0, 0.2]))))
        delta = (rng.uniform(size=n) < 0.7).astype(int)
        cohort = Cohort(y, delta, np.ones(n, dtype=int), x)
        fit = fit_cox(cohort, arm=1)
        grid = np.linspace(0.0, y.max() * 1.1, 50)
        preds = fit.predict(grid, x[:5])
        assert np.all(preds >= 0.0) and np.all(preds <= 1.0)
        assert np.all(np.diff(preds, axis=1) <= 1e-12)
        assert np.all(fit.predict([0.0], x[:5]) == 1.0)

    def test_recovers_true_coefficient_direction(self):
        rng = np.random.default_rng(4)
        n = 400
        x = rng.normal(size=(n, 1))
        y = rng.exponential(scale=np.exp(-1.0 * x[:, 0]))
        cohort = Cohort(y, np.ones(n, dtype=int), np.ones(n, dtype=int), x)
        fit = fit_cox(cohort, arm=1)
        assert fit.coefficients[0] == pytest.approx(1.0, abs=0.2)

    def test_no_events_rejected(self):
        cohort = make_arm_cohort([1, 2], [0, 0], [0.0, 1.0])
        with pytest.raises(Exception):
            fit_cox(cohort, arm=1)
