#!/usr/bin/env python3
"""Influence-based variance estimation, confidence bands, and the efficiency
ordering of the three analyzable estimators.

Run:  python3 demos/04_inference_bands.py
"""

import numpy as np

from survace.adjustment import fit_adjustment, predict_pair
from survace.estimators import TimeGrid, ace_curve
from survace.forest import ForestConfig
from survace.inference import (
    asymptotic_band,
    bootstrap_ci,
    cov_tau0,
    cov_tau2,
    cov_tau3,
    efficiency_ordering_check,
)
from survace.simulation import DgpSetting, calibrate_t0, gen_cohort
from survace.survival import fit_censoring

setting = DgpSetting(n=300, p=10, k=10, beta=0.5, s0=1.0, s1=1.0)
t0 = calibrate_t0(setting)
cohort = gen_cohort(setting, np.random.default_rng(3))
censoring = fit_censoring(cohort)
grid = TimeGrid.default(t0, 20)
m1, m0 = fit_adjustment(cohort, "srf", seed=9,
                        forest_config=ForestConfig(n_trees=300))
mu = predict_pair(m1, m0, grid.times, cohort)

# ---------------------------------------------------------------------------
# asymptotic bands from the influence covariance
# ---------------------------------------------------------------------------
cov0 = cov_tau0(cohort, censoring, grid)
cov2 = cov_tau2(cohort, censoring, mu, grid)
cov3 = cov_tau3(cohort, censoring, mu, grid)
for tag, cov in (("tau0", cov0), ("tau3", cov3)):
    curve = ace_curve(tag, cohort, censoring, mu, grid)
    band = asymptotic_band(tag, curve.estimates, cov, cohort.n)
    j = len(grid) - 1
    print(f"{tag} at t0: {curve.estimates[j]:+.4f} "
          f"[{band.lower[j]:+.4f}, {band.upper[j]:+.4f}]  "
          f"se = {np.sqrt(cov.matrix[j, j] / cohort.n):.4f}")

# ---------------------------------------------------------------------------
# efficiency ordering: w'Aw shrinks from tau0 to tau3
# ---------------------------------------------------------------------------
triple = efficiency_ordering_check(cov0, cov2, cov3, np.ones(len(grid)))
print(f"\nquadratic forms  tau0: {triple.tau0:.1f}  tau2: {triple.tau2:.1f}  "
      f"tau3: {triple.tau3:.1f}")

# ---------------------------------------------------------------------------
# percentile bootstrap band for tau0 (works for any estimator)
# ---------------------------------------------------------------------------
def tau0_recipe(c, g, seed):
    return ace_curve("tau0", c, fit_censoring(c), None, g).estimates

band = bootstrap_ci("tau0", cohort, tau0_recipe, grid, b_boot=200, seed=17)
j = len(grid) - 1
print(f"\nbootstrap tau0 at t0: [{band.lower[j]:+.4f}, {band.upper[j]:+.4f}] "
      f"({band.b_boot} replicates)")
