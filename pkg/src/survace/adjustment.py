"""Assembly of per-subject conditional-survival predictions from the three
interchangeable adjustment backends (Cox, lasso-Cox, survival random forest).

The leave-one-out convention: semiparametric fits (Cox, lasso) reuse the
full-arm fit as the leave-one-out prediction; the forest uses true out-of-bag
predictions for its own training rows.  Subjects from the other arm were never
in the training data, so the plain prediction applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from survace.cox import fit_cox
from survace.forest import ForestConfig, SurvivalForest, fit_srf
from survace.lasso import fit_lasso_cox
from survace.survival import Cohort

BACKENDS = ("cox", "lasso", "srf")


def derive_seed(*key) -> int:
    """Stable 32-bit seed derived from an integer tuple."""
    return int(np.random.SeedSequence(tuple(int(k) for k in key)).generate_state(1)[0])


@dataclass
class MuPair:
    """Leave-one-out predictions mu_hat^(z,-i)(t, X_i) for both arms.

    mu1/mu0 have shape (n_subjects, n_times); times ascend.
    """

    times: np.ndarray
    mu1: np.ndarray
    mu0: np.ndarray

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        self.mu1 = np.atleast_2d(np.asarray(self.mu1, dtype=np.float64))
        self.mu0 = np.atleast_2d(np.asarray(self.mu0, dtype=np.float64))
        if self.mu1.shape != self.mu0.shape or self.mu1.shape[1] != len(self.times):
            raise ValueError("mu1/mu0 must be (n, n_times) aligned with times")

    @property
    def n(self) -> int:
        return self.mu1.shape[0]

    def column(self, t: float):
        """(mu1, mu0) vectors at one grid time."""
        j = int(np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0])
        return self.mu1[:, j], self.mu0[:, j]

    def own_arm(self, z) -> np.ndarray:
        """mu_hat^(Z_i,-i) rows: arm-1 predictions where z=1, arm-0 otherwise."""
        z = np.asarray(z).reshape(-1, 1)
        return np.where(z == 1, self.mu1, self.mu0)

    @classmethod
    def constant(cls, times, n, c1, c0):
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        return cls(times, np.full((n, len(times)), float(c1)),
                   np.full((n, len(times)), float(c0)))


def loo_matrix(model, times, cohort: Cohort) -> np.ndarray:
    """Per-subject predictions with leave-one-out semantics, shape (n, T)."""
    out = model.predict(times, cohort.x)
    if isinstance(model, SurvivalForest):
        out[model.arm_indices] = model.oob_matrix(times)
    return np.clip(out, 0.0, 1.0)


def predict_pair(model_1, model_0, times, cohort: Cohort) -> MuPair:
    """Assemble the (mu1, mu0) leave-one-out prediction table on a time grid."""
    return MuPair(times,
                  loo_matrix(model_1, times, cohort),
                  loo_matrix(model_0, times, cohort))


def fit_adjustment(cohort: Cohort, backend: str, seed: int = 0,
                   forest_config: ForestConfig | None = None,
                   cv_folds: int = 5):
    """Fit the chosen backend on both arms; returns (model_1, model_0)."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "cox":
        return fit_cox(cohort, 1), fit_cox(cohort, 0)
    if backend == "lasso":
        return (fit_lasso_cox(cohort, 1, cv_folds=cv_folds),
                fit_lasso_cox(cohort, 0, cv_folds=cv_folds))
    base = forest_config or ForestConfig()
    cfg1 = ForestConfig(base.n_trees, base.mtry, base.min_unique_deaths,
                        derive_seed(seed, 1), base.bootstrap)
    cfg0 = ForestConfig(base.n_trees, base.mtry, base.min_unique_deaths,
                        derive_seed(seed, 0), base.bootstrap)
    return fit_srf(cohort, 1, cfg1), fit_srf(cohort, 0, cfg0)
