"""Asymptotic variance estimation through influence representations, plus
nonparametric-bootstrap confidence intervals.

For each estimator the per-subject contribution splits into a main term (U1
for tau0, U4 for tau2, U5 for tau3, centered at the point estimate) and a
shared censoring-martingale term U3; the covariance estimate is the empirical
second moment of their sum over subjects.  Closed-form A01/A02/A21 variants
are provided as cross-checks.
"""

from __future__ import annotations

import warnings
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import norm

from survace.adjustment import MuPair
from survace.estimators import ESTIMATOR_TAGS, AceCurve, TimeGrid, _IpcwPieces, ace_curve
from survace.survival import (
    DEFAULT_WEIGHT_FLOOR,
    CensoringModel,
    Cohort,
    SurvivalInputError,
)


@dataclass
class InfluenceTable:
    """Per-subject, per-time influence contributions for one estimator."""

    tag: str
    times: np.ndarray
    main: np.ndarray     # U1 / U4 / U5, centered: column means are ~0
    u3: np.ndarray       # shared censoring-martingale term

    def total(self) -> np.ndarray:
        return self.main + self.u3

    def mean_diagnostic(self) -> float:
        """Largest absolute column mean; should be o(1), flagged past 5/sqrt(n)."""
        worst = float(np.max(np.abs(self.total().mean(axis=0))))
        bound = 5.0 / np.sqrt(self.main.shape[0])
        if worst > bound:
            warnings.warn(
                f"influence column mean {worst:.3g} exceeds sanity bound {bound:.3g}",
                RuntimeWarning, stacklevel=2)
        return worst


@dataclass
class CovarianceEstimate:
    """Covariance process estimate A(t, s) over a grid."""

    tag: str
    times: np.ndarray
    matrix: np.ndarray
    route: str = "empirical"

    def variance_at(self, t: float) -> float:
        j = int(np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0])
        return float(self.matrix[j, j])

    def check(self, tol_scale: float = 1e-8):
        asym = float(np.max(np.abs(self.matrix - self.matrix.T)))
        if asym > 1e-12:
            raise AssertionError(f"covariance asymmetry {asym}")
        eigs = np.linalg.eigvalsh(self.matrix)
        bound = -tol_scale * max(np.trace(self.matrix), 1e-300)
        if eigs[0] < bound:
            raise AssertionError(f"covariance not PSD: min eigenvalue {eigs[0]}")
        return self


@dataclass
class ConfidenceBand:
    """Pointwise interval band at one confidence level."""

    tag: str
    times: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    b_boot: int = 0
    n_redraws: int = 0
    n_failures: int = 0

    def __post_init__(self):
        # band must bracket the point estimate
        self.lower = np.minimum(self.lower, self.estimate)
        self.upper = np.maximum(self.upper, self.estimate)

    def covers(self, value) -> np.ndarray:
        return (self.lower <= value) & (value <= self.upper)

    def excludes_zero(self) -> np.ndarray:
        return (self.lower > 0) | (self.upper < 0)


def _u3_integral(cohort: Cohort, censoring: CensoringModel, times) -> np.ndarray:
    """int_0^t dM_Ci(s) / (n^-1 sum_j I(Y_j >= s)) as an (n, T) matrix.

    Exact Stieltjes sums over the censoring jump times; no grid error.
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    n = cohort.n
    if len(censoring.jump_times) == 0:
        return np.zeros((n, len(times)))
    terms = censoring.martingale_terms(cohort.y, cohort.delta)
    weighted = terms * (n / censoring.jump_at_risk)[None, :]
    prefix = np.cumsum(weighted, axis=1)
    jdx = np.searchsorted(censoring.jump_times, times, side="right") - 1
    out = np.zeros((n, len(times)))
    has = jdx >= 0
    out[:, has] = prefix[:, jdx[has]]
    return out


def _signed_bracket_inv(cohort: Cohort) -> np.ndarray:
    """{alpha_hat Z - (1 - alpha_hat)(1 - Z)}^-1 per subject."""
    a = cohort.alpha_hat
    return np.where(cohort.z == 1, 1.0 / a, -1.0 / (1.0 - a))


def influence_tau0(cohort: Cohort, censoring: CensoringModel, grid: TimeGrid,
                   floor: float = DEFAULT_WEIGHT_FLOOR) -> InfluenceTable:
    """U1 + U3 contributions for the crude IPCW estimator.

    U1 is centered within arms: psi_i = bracket_i^-1 (w_i - mu_hat_{Z_i}) with
    w_i = R_i(t) I(T_i > t) / S_C(t-) and mu_hat_z the arm mean of w.  The
    globally centered variant (... - tau0) carries O(1) within-arm offsets and
    its second moment overstates the variance; the arm-centered form is the
    one consistent with the closed-form A01.
    """
    cohort.require_both_arms()
    times = grid.times
    curve = ace_curve("tau0", cohort, censoring, None, grid, floor)
    tau = curve.estimates
    pieces = _IpcwPieces(cohort, censoring, times, floor)
    sc = np.maximum(censoring.curve.left(times), floor)
    binv = _signed_bracket_inv(cohort)
    w = pieces.alive / sc[None, :]
    mu_arm = np.where((cohort.z == 1)[:, None],
                      w[pieces.z1].mean(axis=0)[None, :],
                      w[pieces.z0].mean(axis=0)[None, :])
    u1 = binv[:, None] * (w - mu_arm)
    u3 = tau[None, :] * _u3_integral(cohort, censoring, times)
    return InfluenceTable("tau0", times, u1, u3)


def influence_tau2(cohort: Cohort, censoring: CensoringModel,
                   predictions: MuPair, grid: TimeGrid,
                   floor: float = DEFAULT_WEIGHT_FLOOR) -> InfluenceTable:
    """U4 + U3 contributions for tau2."""
    cohort.require_both_arms()
    times = grid.times
    curve = ace_curve("tau2", cohort, censoring, predictions, grid, floor)
    tau = curve.estimates
    pieces = _IpcwPieces(cohort, censoring, times, floor)
    binv = _signed_bracket_inv(cohort)
    mu_own = predictions.own_arm(cohort.z)
    w = pieces.alive / pieces.pi
    u4 = (predictions.mu1 - predictions.mu0
          + binv[:, None] * (w - mu_own)
          - tau[None, :])
    tau0_est = ace_curve("tau0", cohort, censoring, None, grid, floor).estimates
    u3 = tau0_est[None, :] * _u3_integral(cohort, censoring, times)
    return InfluenceTable("tau2", times, u4, u3)


def influence_tau3(cohort: Cohort, censoring: CensoringModel,
                   predictions: MuPair, grid: TimeGrid,
                   floor: float = DEFAULT_WEIGHT_FLOOR) -> InfluenceTable:
    """U5 + U3 contributions for tau3."""
    cohort.require_both_arms()
    times = grid.times
    curve = ace_curve("tau3", cohort, censoring, predictions, grid, floor)
    tau = curve.estimates
    pieces = _IpcwPieces(cohort, censoring, times, floor)
    binv = _signed_bracket_inv(cohort)
    mu_own = predictions.own_arm(cohort.z)
    u5 = (predictions.mu1 - predictions.mu0
          + binv[:, None] * pieces.risk * (pieces.alive - mu_own) / pieces.pi
          - tau[None, :])
    tau0_est = ace_curve("tau0", cohort, censoring, None, grid, floor).estimates
    u3 = tau0_est[None, :] * _u3_integral(cohort, censoring, times)
    return InfluenceTable("tau3", times, u5, u3)


def covariance_from_influence(table: InfluenceTable) -> CovarianceEstimate:
    """Empirical covariance n^-1 sum_i psi_i(t) psi_i(s)."""
    psi = table.total()
    a = psi.T @ psi / psi.shape[0]
    a = (a + a.T) / 2.0
    return CovarianceEstimate(table.tag, table.times, a)


def cov_tau0(cohort, censoring, grid, floor=DEFAULT_WEIGHT_FLOOR) -> CovarianceEstimate:
    return covariance_from_influence(influence_tau0(cohort, censoring, grid, floor))


def cov_tau2(cohort, censoring, predictions, grid,
             floor=DEFAULT_WEIGHT_FLOOR) -> CovarianceEstimate:
    return covariance_from_influence(
        influence_tau2(cohort, censoring, predictions, grid, floor))


def cov_tau3(cohort, censoring, predictions, grid,
             floor=DEFAULT_WEIGHT_FLOOR) -> CovarianceEstimate:
    return covariance_from_influence(
        influence_tau3(cohort, censoring, predictions, grid, floor))


def _a02_matrix(cohort, censoring, grid, tau0_est, floor):
    """A02(t,s) = tau0(t) tau0(s) * int_0^{t^s} dLambda_C(u) / (n^-1 sum I(Y>=u))."""
    times = grid.times
    if len(censoring.jump_times) == 0:
        v_at = np.zeros(len(times))
    else:
        v_jumps = np.cumsum(censoring.jump_dlam * cohort.n / censoring.jump_at_risk)
        jdx = np.searchsorted(censoring.jump_times, times, side="right") - 1
        v_at = np.where(jdx >= 0, np.concatenate([[0.0], v_jumps])[jdx + 1], 0.0)
    imin = np.minimum.outer(np.arange(len(times)), np.arange(len(times)))
    return np.outer(tau0_est, tau0_est) * v_at[imin]


def closed_form_cov_tau0(cohort, censoring, grid,
                         floor=DEFAULT_WEIGHT_FLOOR) -> CovarianceEstimate:
    """A01 + A02 with the marginal arm survivals plugged in via IPCW."""
    times = grid.times
    pieces = _IpcwPieces(cohort, censoring, times, floor)
    w = pieces.alive / pieces.pi
    mu1 = w[pieces.z1].mean(axis=0)
    mu0 = w[pieces.z0].mean(axis=0)
    sc = np.maximum(censoring.curve.left(times), floor)
    a = cohort.alpha_hat
    k = np.arange(len(times))
    imax = np.maximum.outer(k, k)
    imin = np.minimum.outer(k, k)
    a01 = (mu1[imax] / sc[imin] - np.outer(mu1, mu1)) / a \
        + (mu0[imax] / sc[imin] - np.outer(mu0, mu0)) / (1 - a)
    a02 = _a02_matrix(cohort, censoring, grid, mu1 - mu0, floor)
    return CovarianceEstimate("tau0", times, a01 + a02, route="closed-form")


def closed_form_cov_tau2(cohort, censoring, predictions, grid,
                         floor=DEFAULT_WEIGHT_FLOOR) -> CovarianceEstimate:
    """A21 + A02 with leave-one-out predictions plugged in."""
    times = grid.times
    sc = np.maximum(censoring.curve.left(times), floor)
    a = cohort.alpha_hat
    k = np.arange(len(times))
    imax = np.maximum.outer(k, k)
    imin = np.minimum.outer(k, k)
    n = cohort.n
    m1 = predictions.mu1
    m0 = predictions.mu0
    a21 = (m1.mean(axis=0)[imax] / sc[imin] - m1.T @ m1 / n) / a \
        + (m0.mean(axis=0)[imax] / sc[imin] - m0.T @ m0 / n) / (1 - a)
    tau0_est = ace_curve("tau0", cohort, censoring, None, grid, floor).estimates
    a02 = _a02_matrix(cohort, censoring, grid, tau0_est, floor)
    return CovarianceEstimate("tau2", times, a21 + a02, route="closed-form")


def asymptotic_band(tag, estimates, cov: CovarianceEstimate, n: int,
                    level: float = 0.95) -> ConfidenceBand:
    """Normal pointwise band from the influence-based covariance."""
    z = float(ndtri(0.5 + level / 2))
    se = np.sqrt(np.clip(np.diag(cov.matrix), 0.0, None) / n)
    return ConfidenceBand(tag, cov.times, np.asarray(estimates),
                          estimates - z * se, estimates + z * se,
                          level, "asymptotic")


EfficiencyTriple = namedtuple("EfficiencyTriple", ["tau0", "tau2", "tau3"])


def efficiency_ordering_check(cov0: CovarianceEstimate, cov2: CovarianceEstimate,
                              cov3: CovarianceEstimate, weights) -> EfficiencyTriple:
    """Quadratic forms w'Aw for the three covariance processes."""
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    for cov in (cov0, cov2, cov3):
        if len(cov.times) != len(w):
            raise SurvivalInputError("weights must match the covariance grid")
        if not np.allclose(cov.times, cov0.times, rtol=0, atol=1e-12):
            raise SurvivalInputError("covariances must share one grid")
    return EfficiencyTriple(*(float(w @ cov.matrix @ w) for cov in (cov0, cov2, cov3)))


def percentile_interval(samples: np.ndarray, level: float):
    """Order-statistic percentile interval; B=2 yields the (min, max) pair."""
    s = np.sort(samples, axis=0)
    b = s.shape[0]
    alpha2 = (1 - level) / 2
    lo = min(b - 1, max(0, int(np.ceil(alpha2 * b)) - 1))
    hi = min(b - 1, max(0, int(np.ceil((1 - alpha2) * b)) - 1))
    return s[lo], s[hi]


def bootstrap_ci(tag: str, cohort: Cohort, fit_and_estimate, grid: TimeGrid,
                 b_boot: int = 1000, level: float = 0.95, seed: int = 0,
                 min_success: float = 0.9, max_redraws: int = 1000) -> ConfidenceBand:
    """Percentile bootstrap band from nonparametric resampling of subjects.

    `fit_and_estimate(cohort, grid, seed)` must refit the censoring model and
    any adjustment models on the resample and return the estimate vector over
    the grid.  Replicates whose model fit fails are dropped (counted); at
    least `min_success * b_boot` must survive.
    """
    if tag not in ESTIMATOR_TAGS:
        raise ValueError(f"unknown estimator tag {tag!r}")
    if b_boot < 2:
        raise ValueError("b_boot must be >= 2")
    point = np.asarray(fit_and_estimate(cohort, grid, seed), dtype=np.float64)

    children = np.random.SeedSequence(seed).spawn(b_boot)
    reps = []
    n_redraws = 0
    n_failures = 0
    for b in range(b_boot):
        rng = np.random.default_rng(children[b])
        for _ in range(max_redraws):
            idx = rng.integers(0, cohort.n, size=cohort.n)
            z = cohort.z[idx]
            if 0 < z.sum() < cohort.n:
                break
            n_redraws += 1
        else:
            raise SurvivalInputError("could not draw a resample with both arms")
        resample = cohort.subset(idx)
        rep_seed = int(rng.integers(0, 2**31 - 1))
        try:
            reps.append(np.asarray(fit_and_estimate(resample, grid, rep_seed)))
        except Exception:
            n_failures += 1
    if len(reps) < min_success * b_boot:
        raise SurvivalInputError(
            f"only {len(reps)}/{b_boot} bootstrap replicates succeeded")
    reps = np.vstack(reps)
    lower, upper = percentile_interval(reps, level)
    return ConfidenceBand(tag, grid.times, point, lower, upper, level,
                          "bootstrap", b_boot=len(reps),
                          n_redraws=n_redraws, n_failures=n_failures)


def averaged_ace_inference(curve: AceCurve, cov: CovarianceEstimate, n: int,
                           weights) -> tuple[float, float, float]:
    """(estimate, se, two-sided p) for the w-averaged ACE via the influence
    covariance of the quadrature."""
    from survace.estimators import average_ace, quadrature_coefficients
    est = average_ace(curve, weights)
    c = quadrature_coefficients(curve.times, weights)
    var = float(c @ cov.matrix @ c) / n
    se = float(np.sqrt(max(var, 0.0)))
    if se == 0:
        p = 0.0 if est != 0 else 1.0
    else:
        p = float(2 * norm.sf(abs(est) / se))
    return est, se, p
