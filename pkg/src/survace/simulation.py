"""Data-generating process and Monte Carlo study runner.

Covariates are AR(1)-correlated Gaussians; potential event times are
exponential with rates exp(x'gamma0) and exp(beta + x'gamma1), censoring is
Uniform[0, censor_max].  The horizon t0 is the median observed time in a
large calibration sample, and the ground-truth effect is a large-N Monte
Carlo evaluation of Pr(T1 > t) - Pr(T0 > t); both use fixed dedicated seed
streams so they are shared across estimators within a study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from survace.adjustment import derive_seed, fit_adjustment, predict_pair
from survace.estimators import TimeGrid, ace_curve
from survace.forest import ForestConfig
from survace.inference import (
    cov_tau0,
    cov_tau2,
    cov_tau3,
    covariance_from_influence,
    influence_tau0,
    influence_tau2,
    influence_tau3,
)
from survace.survival import Cohort, SurvivalInputError, fit_censoring

CALIBRATION_SEED = 760_201
TRUTH_SEED = 421_734
ESTIMATORS = ("tau0", "tau1", "tau2", "tau3")


@dataclass(frozen=True)
class DgpSetting:
    """One simulation configuration."""

    n: int = 100
    alpha: float = 0.5
    p: int = 10
    k: int = 10
    rho: float = 0.8
    beta: float = 0.0
    s0: float = 0.0
    s1: float = 0.0
    censor_max: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if self.k > self.p:
            raise ValueError("sparsity k cannot exceed p")
        if self.censor_max <= 0:
            raise ValueError("censor_max must be positive")

    @property
    def gamma0(self) -> np.ndarray:
        j = np.arange(1, self.p + 1)
        return self.s0 * (j <= self.k) / j

    @property
    def gamma1(self) -> np.ndarray:
        j = np.arange(1, self.p + 1)
        return self.s1 * (j <= self.k) / j

    def label(self) -> str:
        return (f"beta={self.beta:g},p={self.p},k={self.k},"
                f"s0={self.s0:g},s1={self.s1:g},n={self.n}")


def gen_covariates(n: int, p: int, rho: float, rng) -> np.ndarray:
    """AR(1)-correlated standard normals: X_1 = e_1, X_j = rho X_{j-1} +
    sqrt(1 - rho^2) e_j, giving corr(X_j, X_l) = rho^|j-l| exactly."""
    eps = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = eps[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + scale * eps[:, j]
    return x


def _rates(x, setting):
    r0 = np.exp(x @ setting.gamma0)
    r1 = np.exp(setting.beta + x @ setting.gamma1)
    return r0, r1


def gen_potential_times(x, setting, rng):
    """Independent potential event times (T0, T1) given covariate rows."""
    r0, r1 = _rates(np.atleast_2d(x), setting)
    u0 = rng.uniform(size=len(r0))
    u1 = rng.uniform(size=len(r1))
    return -np.log(u0) / r0, -np.log(u1) / r1


def gen_outcomes(x_row, z, setting, rng):
    """(T, C, Y, Delta) for one subject under assignment z."""
    t0, t1 = gen_potential_times(x_row, setting, rng)
    t = float(t1[0] if z == 1 else t0[0])
    c = float(rng.uniform(0, setting.censor_max))
    return t, c, min(t, c), int(t <= c)


def gen_cohort(setting: DgpSetting, rng, max_redraws: int = 1000) -> Cohort:
    """One observed cohort; the assignment vector is redrawn if an arm is empty."""
    n = setting.n
    x = gen_covariates(n, setting.p, setting.rho, rng)
    for _ in range(max_redraws):
        z = (rng.uniform(size=n) < setting.alpha).astype(int)
        if 0 < z.sum() < n:
            break
    else:
        raise SurvivalInputError("could not draw an assignment with both arms")
    t0, t1 = gen_potential_times(x, setting, rng)
    t = np.where(z == 1, t1, t0)
    c = rng.uniform(0, setting.censor_max, size=n)
    return Cohort(np.minimum(t, c), (t <= c).astype(int), z, x)


def calibrate_t0(setting: DgpSetting, n_cal: int = 50_000) -> float:
    """Median observed time over a large calibration sample (fixed seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(CALIBRATION_SEED))
    x = gen_covariates(n_cal, setting.p, setting.rho, rng)
    z = (rng.uniform(size=n_cal) < setting.alpha).astype(int)
    t0, t1 = gen_potential_times(x, setting, rng)
    t = np.where(z == 1, t1, t0)
    c = rng.uniform(0, setting.censor_max, size=n_cal)
    return float(np.median(np.minimum(t, c)))


@dataclass(frozen=True)
class TruthEstimate:
    value: float
    se: float
    n_draws: int


def true_ace(setting: DgpSetting, t: float, n_draws: int = 1_000_000,
             chunk: int = 100_000) -> TruthEstimate:
    """Monte Carlo Pr(T1 > t) - Pr(T0 > t) under the DGP (fixed seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(TRUTH_SEED))
    s1 = s0 = 0.0
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        x = gen_covariates(m, setting.p, setting.rho, rng)
        pt0, pt1 = gen_potential_times(x, setting, rng)
        s1 += np.count_nonzero(pt1 > t)
        s0 += np.count_nonzero(pt0 > t)
        done += m
    p1 = s1 / n_draws
    p0 = s0 / n_draws
    se = math.sqrt((p1 * (1 - p1) + p0 * (1 - p0)) / n_draws)
    return TruthEstimate(p1 - p0, se, n_draws)


# ---------------------------------------------------------------------------
# study runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo study knobs (sizes, seeds, backend parameters)."""

    backend: str = "srf"
    estimators: tuple = ESTIMATORS
    n_reps: int = 500
    seed: int = 0
    level: float = 0.95
    forest_trees: int = 150
    mtry: int | None = None
    min_unique_deaths: int = 3
    boot_tau1: int = 100          # bootstrap resamples for tau1's SE; 0 skips
    boot_trees: int = 80          # forest size inside tau1's bootstrap
    cv_folds: int = 5
    quad_grid_points: int = 0     # >0: per-replicate w'Aw on the default grid
    truth_draws: int = 1_000_000


@dataclass
class EstimatorMetrics:
    tag: str
    n_ok: int
    bias: float
    sd: float
    ese: float
    rel_mse: float
    cr: float
    power: float
    n_failures: int


@dataclass
class McReport:
    setting: DgpSetting
    config: StudyConfig
    t0: float
    truth: TruthEstimate
    metrics: dict
    quad_forms: dict | None = None
    replicates: dict | None = field(default=None, repr=False)

    def row(self, tag):
        return self.metrics[tag]


def _forest_cfg(config: StudyConfig, trees: int, seed: int) -> ForestConfig:
    return ForestConfig(n_trees=trees, mtry=config.mtry,
                        min_unique_deaths=config.min_unique_deaths, seed=seed)


def _tau1_bootstrap_sd(cohort, t0, setting, config, rep_seed):
    """SD of tau1 over nonparametric resamples, refitting the backend."""
    children = np.random.SeedSequence((rep_seed, 97)).spawn(config.boot_tau1)
    vals = []
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        for _ in range(1000):
            idx = rng.integers(0, cohort.n, size=cohort.n)
            if 0 < cohort.z[idx].sum() < cohort.n:
                break
        resample = cohort.subset(idx)
        boot_seed = derive_seed(rep_seed, 11, b)
        try:
            m1, m0 = fit_adjustment(
                resample, config.backend, seed=boot_seed,
                forest_config=_forest_cfg(config, config.boot_trees, boot_seed),
                cv_folds=config.cv_folds)
            mu = predict_pair(m1, m0, [t0], resample)
            vals.append(float((mu.mu1[:, 0] - mu.mu0[:, 0]).mean()))
        except Exception:
            continue
    if len(vals) < max(2, 0.5 * config.boot_tau1):
        return math.nan
    return float(np.std(vals, ddof=1))


def run_replicate(setting: DgpSetting, config: StudyConfig, t0: float, r: int):
    """One replicate: estimates, SEs, CI bounds per estimator (NaN on failure)."""
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 5, r)))
    cohort = gen_cohort(setting, rng)
    censoring = fit_censoring(cohort)
    grid = TimeGrid(np.array([t0]), t0=t0)
    z_crit = float(-ndtri((1 - config.level) / 2))

    out = {}
    if "tau0" in config.estimators:
        table = influence_tau0(cohort, censoring, grid)
        est = float(ace_curve("tau0", cohort, censoring, None, grid).estimates[0])
        se = math.sqrt(covariance_from_influence(table).matrix[0, 0] / cohort.n)
        out["tau0"] = (est, se, est - z_crit * se, est + z_crit * se)

    needs_model = [e for e in config.estimators if e != "tau0"]
    if needs_model:
        rep_seed = derive_seed(config.seed, 3, r)
        try:
            m1, m0 = fit_adjustment(
                cohort, config.backend, seed=rep_seed,
                forest_config=_forest_cfg(config, config.forest_trees, rep_seed),
                cv_folds=config.cv_folds)
            mu = predict_pair(m1, m0, [t0], cohort)
        except Exception:
            for tag in needs_model:
                out[tag] = (math.nan,) * 4
            out["quad"] = None
            return out

        if "tau1" in config.estimators:
            est = float((mu.mu1[:, 0] - mu.mu0[:, 0]).mean())
            if config.boot_tau1 > 0:
                se = _tau1_bootstrap_sd(cohort, t0, setting, config, rep_seed)
            else:
                se = math.nan
            if math.isnan(se):
                out["tau1"] = (est, math.nan, math.nan, math.nan)
            else:
                out["tau1"] = (est, se, est - z_crit * se, est + z_crit * se)
        for tag, table_fn in (("tau2", influence_tau2), ("tau3", influence_tau3)):
            if tag not in config.estimators:
                continue
            table = table_fn(cohort, censoring, mu, grid)
            est = float(ace_curve(tag, cohort, censoring, mu, grid).estimates[0])
            se = math.sqrt(covariance_from_influence(table).matrix[0, 0] / cohort.n)
            out[tag] = (est, se, est - z_crit * se, est + z_crit * se)

        if config.quad_grid_points > 0:
            qgrid = TimeGrid.default(t0, config.quad_grid_points)
            mu_g = predict_pair(m1, m0, qgrid.times, cohort)
            w = np.ones(len(qgrid))
            c0 = cov_tau0(cohort, censoring, qgrid)
            c2 = cov_tau2(cohort, censoring, mu_g, qgrid)
            c3 = cov_tau3(cohort, censoring, mu_g, qgrid)
            out["quad"] = (float(w @ c0.matrix @ w),
                           float(w @ c2.matrix @ w),
                           float(w @ c3.matrix @ w))
        else:
            out["quad"] = None
    else:
        out["quad"] = None
    return out


def run_study(setting: DgpSetting, config: StudyConfig, t0: float | None = None,
              truth: TruthEstimate | None = None, n_jobs: int = 1) -> McReport:
    """Monte Carlo study over `config.n_reps` independent cohorts.

    Deterministic given (setting, config): replicate seeds derive from
    (config.seed, replicate index), and the calibration/truth streams are
    fixed, so the report is identical for any n_jobs.
    """
    if config.n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    if t0 is None:
        t0 = calibrate_t0(setting)
    if truth is None:
        truth = true_ace(setting, t0, n_draws=config.truth_draws)

    reps = range(config.n_reps)
    if n_jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(n_jobs) as pool:
            results = pool.starmap(
                run_replicate, [(setting, config, t0, r) for r in reps])
    else:
        results = [run_replicate(setting, config, t0, r) for r in reps]

    arrays = {tag: np.array([res[tag] for res in results])
              for tag in config.estimators}
    mse0 = None
    if "tau0" in arrays:
        a0 = arrays["tau0"]
        ok0 = ~np.isnan(a0[:, 0])
        mse0 = float(np.mean((a0[ok0, 0] - truth.value) ** 2))
    metrics = {}
    for tag in config.estimators:
        a = arrays[tag]
        ok = ~np.isnan(a[:, 0])
        est, se, lo, hi = (a[ok, j] for j in range(4))
        mse = float(np.mean((est - truth.value) ** 2)) if len(est) else math.nan
        ci_ok = ~np.isnan(lo)
        metrics[tag] = EstimatorMetrics(
            tag=tag,
            n_ok=int(ok.sum()),
            bias=float(np.mean(est) - truth.value) if len(est) else math.nan,
            sd=float(np.std(est, ddof=1)) if len(est) > 1 else math.nan,
            ese=float(np.nanmean(se)) if np.any(~np.isnan(se)) else math.nan,
            rel_mse=math.nan,
            cr=float(np.mean((lo[ci_ok] <= truth.value) & (truth.value <= hi[ci_ok])))
            if ci_ok.any() else math.nan,
            power=float(np.mean((lo[ci_ok] > 0) | (hi[ci_ok] < 0)))
            if ci_ok.any() else math.nan,
            n_failures=int((~ok).sum()),
        )
        metrics[tag].rel_mse = mse / mse0 if mse0 else math.nan
    quad = None
    if config.quad_grid_points > 0:
        quads = np.array([res["quad"] for res in results if res["quad"] is not None])
        if len(quads):
            quad = {"tau0": float(quads[:, 0].mean()),
                    "tau2": float(quads[:, 1].mean()),
                    "tau3": float(quads[:, 2].mean())}
    return McReport(setting, config, t0, truth, metrics, quad_forms=quad,
                    replicates={tag: arrays[tag] for tag in config.estimators})
