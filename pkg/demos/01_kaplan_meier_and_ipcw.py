#!/usr/bin/env python3
"""Survival building blocks: Kaplan-Meier curves, the censoring model,
inverse-probability-of-censoring weights, and martingale residuals.

Run:  python3 demos/01_kaplan_meier_and_ipcw.py
"""

import numpy as np

from survace.simulation import DgpSetting, gen_cohort
from survace.survival import fit_censoring, ipcw_weight, km_fit, martingale_residual

rng = np.random.default_rng(2024)
cohort = gen_cohort(DgpSetting(n=200, p=5, k=5, beta=0.5, s0=0.5, s1=0.5), rng)
print(f"cohort: n={cohort.n}, events={int(cohort.delta.sum())}, "
      f"treated={cohort.n1}")

# ---------------------------------------------------------------------------
# Kaplan-Meier curves per arm
# ---------------------------------------------------------------------------
for arm in (0, 1):
    mask = cohort.arm_mask(arm)
    curve = km_fit(cohort.y[mask], cohort.delta[mask])
    print(f"arm {arm}: S(0.25) = {curve(0.25):.3f}   S(0.5) = {curve(0.5):.3f}   "
          f"S(1.0) = {curve(1.0):.3f}")

# ---------------------------------------------------------------------------
# censoring model: flip the event flag, same machinery
# ---------------------------------------------------------------------------
censoring = fit_censoring(cohort)
print(f"\ncensoring survival S_C(0.5) = {censoring.survival(0.5):.3f}  "
      f"Lambda_C(0.5) = {censoring.cum_hazard(0.5):.3f}")

# IPCW weights grow over time as censoring eats the risk set
late = int(np.argmax(cohort.y))
rec = cohort.record(late)
print(f"weights for subject {late} (Y = {rec.y:.2f}):",
      " ".join(f"t={t:.2f}:{1/ipcw_weight(censoring, rec, t):.3f}x"
               for t in (0.2, 0.5, 1.0, 1.5)))

# ---------------------------------------------------------------------------
# martingale residuals sum to zero at every censoring jump
# ---------------------------------------------------------------------------
sums = [sum(martingale_residual(censoring, cohort.record(i), s)
            for i in range(cohort.n)) for s in censoring.jump_times[:5]]
print("\nmartingale residual sums at the first censoring jumps:",
      np.round(sums, 14))
