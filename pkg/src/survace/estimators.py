"""The four average-causal-effect estimators on the survival scale.

tau0: crude IPCW contrast of arm survival.
tau1: mean difference of leave-one-out model predictions.
tau2: model mean plus IPCW residual contrast per arm.
tau3: model mean plus IPCW-weighted residuals among still-informative subjects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from survace.adjustment import MuPair
from survace.survival import (
    DEFAULT_WEIGHT_FLOOR,
    CensoringModel,
    Cohort,
    SurvivalInputError,
    warn_if_all_floored,
)

ESTIMATOR_TAGS = ("tau0", "tau1", "tau2", "tau3")


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing evaluation times within (0, t0]."""

    times: np.ndarray
    t0: float

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        if len(times) == 0:
            raise SurvivalInputError("time grid must be nonempty")
        if np.any(np.diff(times) <= 0):
            raise SurvivalInputError("grid times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.t0 + 1e-12:
            raise SurvivalInputError("grid times must lie in [0, t0]")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)

    @classmethod
    def default(cls, t0: float, n_points: int = 50) -> "TimeGrid":
        return cls(np.linspace(t0 / n_points, t0, n_points), t0)


@dataclass
class AceCurve:
    """Per-time estimates for one estimator, with weighting diagnostics."""

    tag: str
    times: np.ndarray
    estimates: np.ndarray
    n_floored: int = 0
    influence: object = None    # attached by the inference module


class _IpcwPieces:
    """Shared IPCW building blocks on a grid of times.

    alive[i,t] = I(Y_i > t) (equals R_i(t) I(T_i > t) on observed data);
    pi[i,t] = S_C((t ^ Y_i)-) floored; risk[i,t] = R_i(t).
    """

    def __init__(self, cohort: Cohort, censoring: CensoringModel, times,
                 floor: float = DEFAULT_WEIGHT_FLOOR):
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        if np.any(times < 0):
            raise SurvivalInputError("evaluation times must be >= 0")
        y = cohort.y[:, None]
        self.times = times
        self.floor = floor
        self.alive = (y > times[None, :]).astype(np.float64)
        self.risk = ((cohort.delta[:, None] == 1) | (y > times[None, :])).astype(np.float64)
        pi_raw = censoring.curve.left(np.minimum(y, times[None, :]))
        self.n_floored = int(np.count_nonzero(pi_raw < floor))
        self.pi = np.maximum(pi_raw, floor)
        self.z1 = cohort.z == 1
        self.z0 = ~self.z1


def _arm_means(values, z1, z0):
    return values[z1].mean(axis=0), values[z0].mean(axis=0)


def _tau0_from_pieces(pieces, cohort, warn_t=None):
    w = pieces.alive / pieces.pi
    m1, m0 = _arm_means(w, pieces.z1, pieces.z0)
    if warn_t is not None:
        for arm, mask in ((1, pieces.z1), (0, pieces.z0)):
            contrib = pieces.alive[mask][:, -1] > 0
            floored = pieces.pi[mask][:, -1] <= pieces.floor
            warn_if_all_floored(int(contrib.sum()), int((contrib & floored).sum()),
                                arm, warn_t)
    return m1 - m0


def tau0(cohort: Cohort, censoring: CensoringModel, t: float,
         floor: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Crude IPCW estimator at a single time."""
    cohort.require_both_arms()
    pieces = _IpcwPieces(cohort, censoring, [t], floor)
    return float(_tau0_from_pieces(pieces, cohort, warn_t=t)[0])


def tau1(cohort: Cohort, predictions: MuPair, t: float) -> float:
    """Pure model-based estimator at a single time."""
    mu1, mu0 = predictions.column(t)
    return float(np.mean(mu1 - mu0))


def tau2(cohort: Cohort, censoring: CensoringModel, predictions: MuPair,
         t: float, floor: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Model mean plus per-arm IPCW residual terms at a single time."""
    cohort.require_both_arms()
    pieces = _IpcwPieces(cohort, censoring, [t], floor)
    mu1, mu0 = predictions.column(t)
    w = (pieces.alive / pieces.pi)[:, 0]
    model_mean = np.mean(mu1 - mu0)
    res1 = np.mean(w[pieces.z1] - mu1[pieces.z1])
    res0 = np.mean(w[pieces.z0] - mu0[pieces.z0])
    return float(model_mean + res1 - res0)


def tau3(cohort: Cohort, censoring: CensoringModel, predictions: MuPair,
         t: float, floor: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Model mean plus IPCW-weighted residuals among informative subjects."""
    cohort.require_both_arms()
    pieces = _IpcwPieces(cohort, censoring, [t], floor)
    mu1, mu0 = predictions.column(t)
    alive = pieces.alive[:, 0]
    risk = pieces.risk[:, 0]
    pi = pieces.pi[:, 0]
    model_mean = np.mean(mu1 - mu0)
    res = risk * (alive - np.where(cohort.z == 1, mu1, mu0)) / pi
    return float(model_mean + res[pieces.z1].mean() - res[pieces.z0].mean())


def ace_curve(tag: str, cohort: Cohort, censoring: CensoringModel,
              predictions: MuPair | None, grid: TimeGrid,
              floor: float = DEFAULT_WEIGHT_FLOOR) -> AceCurve:
    """Evaluate one estimator over a grid (vectorized over times)."""
    if tag not in ESTIMATOR_TAGS:
        raise ValueError(f"unknown estimator tag {tag!r}")
    cohort.require_both_arms()
    times = grid.times
    if tag != "tau0":
        if predictions is None:
            raise SurvivalInputError(f"{tag} requires adjustment predictions")
        if len(predictions.times) != len(times) or not np.allclose(
                predictions.times, times, rtol=0, atol=1e-12):
            raise SurvivalInputError("prediction grid must match the time grid")

    if tag == "tau1":
        est = (predictions.mu1 - predictions.mu0).mean(axis=0)
        return AceCurve(tag, times, est)

    pieces = _IpcwPieces(cohort, censoring, times, floor)
    if tag == "tau0":
        est = _tau0_from_pieces(pieces, cohort)
        return AceCurve(tag, times, est, pieces.n_floored)

    model_mean = (predictions.mu1 - predictions.mu0).mean(axis=0)
    mu_own = predictions.own_arm(cohort.z)
    if tag == "tau2":
        w = pieces.alive / pieces.pi
        res1 = (w - predictions.mu1)[pieces.z1].mean(axis=0)
        res0 = (w - predictions.mu0)[pieces.z0].mean(axis=0)
        est = model_mean + res1 - res0
    else:
        res = pieces.risk * (pieces.alive - mu_own) / pieces.pi
        est = model_mean + res[pieces.z1].mean(axis=0) - res[pieces.z0].mean(axis=0)
    return AceCurve(tag, times, est, pieces.n_floored)


def average_ace(curve: AceCurve, weights) -> float:
    """Trapezoidal average of w(t) * tau(t), normalized by the mass of w."""
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if w.shape != curve.times.shape:
        raise SurvivalInputError("weights must match the grid length")
    if np.any(w < 0):
        raise SurvivalInputError("weights must be nonnegative")
    if not np.any(w > 0):
        raise SurvivalInputError("weights must not be all zero")
    if len(w) == 1:
        return float(curve.estimates[0])
    num = np.trapezoid(w * curve.estimates, curve.times)
    den = np.trapezoid(w, curve.times)
    return float(num / den)


def quadrature_coefficients(times, weights) -> np.ndarray:
    """Coefficients c with sum_j c_j tau(t_j) = trapz(w*tau)/trapz(w)."""
    times = np.asarray(times, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if len(times) == 1:
        return np.ones(1)
    trap = np.zeros_like(times)
    dt = np.diff(times)
    trap[:-1] += dt / 2
    trap[1:] += dt / 2
    c = trap * w
    return c / c.sum()
