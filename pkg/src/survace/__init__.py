"""Covariate-adjusted average causal effects on the survival-probability scale
for randomized studies with right censoring."""

from survace.adjustment import MuPair, fit_adjustment, predict_pair
from survace.cox import CoxConvergenceError, CoxFit, fit_cox
from survace.estimators import (
    AceCurve,
    TimeGrid,
    ace_curve,
    average_ace,
    tau0,
    tau1,
    tau2,
    tau3,
)
from survace.forest import ForestConfig, SurvivalForest, fit_srf, oob_predict
from survace.inference import (
    ConfidenceBand,
    CovarianceEstimate,
    InfluenceTable,
    asymptotic_band,
    bootstrap_ci,
    cov_tau0,
    cov_tau2,
    cov_tau3,
    efficiency_ordering_check,
    influence_tau0,
    influence_tau2,
    influence_tau3,
)
from survace.lasso import LassoCoxFit, fit_lasso_cox
from survace.simulation import (
    DgpSetting,
    McReport,
    StudyConfig,
    calibrate_t0,
    gen_cohort,
    run_study,
    true_ace,
)
from survace.survival import (
    CensoringModel,
    Cohort,
    SurvivalCurve,
    SurvivalRecord,
    fit_censoring,
    ipcw_weight,
    km_fit,
    martingale_residual,
    risk_indicator,
)

__version__ = "0.1.0"

__all__ = [
    "AceCurve",
    "CensoringModel",
    "Cohort",
    "ConfidenceBand",
    "CovarianceEstimate",
    "CoxConvergenceError",
    "CoxFit",
    "DgpSetting",
    "ForestConfig",
    "InfluenceTable",
    "LassoCoxFit",
    "McReport",
    "MuPair",
    "StudyConfig",
    "SurvivalCurve",
    "SurvivalForest",
    "SurvivalRecord",
    "TimeGrid",
    "ace_curve",
    "asymptotic_band",
    "average_ace",
    "bootstrap_ci",
    "calibrate_t0",
    "cov_tau0",
    "cov_tau2",
    "cov_tau3",
    "efficiency_ordering_check",
    "fit_adjustment",
    "fit_censoring",
    "fit_cox",
    "fit_lasso_cox",
    "fit_srf",
    "gen_cohort",
    "influence_tau0",
    "influence_tau2",
    "influence_tau3",
    "ipcw_weight",
    "km_fit",
    "martingale_residual",
    "oob_predict",
    "predict_pair",
    "risk_indicator",
    "run_study",
    "tau0",
    "tau1",
    "tau2",
    "tau3",
    "true_ace",
]
