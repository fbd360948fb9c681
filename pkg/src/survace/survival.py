"""Core survival quantities: Kaplan-Meier curves, the censoring model,
inverse-probability-of-censoring weights, and censoring martingale residuals.

Everything here is fit once and then treated as immutable; fitted objects are
safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_WEIGHT_FLOOR = 1e-3


class SurvivalInputError(ValueError):
    """Raised for malformed survival data (empty input, negative times, ...)."""


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time, event flag, arm indicator, covariate row."""

    y: float
    delta: int
    z: int
    x: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.y) or self.y < 0:
            raise SurvivalInputError(f"observed time must be finite and >= 0, got {self.y}")
        if self.delta not in (0, 1):
            raise SurvivalInputError(f"event flag must be 0 or 1, got {self.delta}")
        if self.z not in (0, 1):
            raise SurvivalInputError(f"arm indicator must be 0 or 1, got {self.z}")


class Cohort:
    """A fixed-order collection of subjects.

    Row order is identity: index i is what leave-one-out predictions and
    influence contributions refer to.
    """

    def __init__(self, y, delta, z, x):
        y = np.asarray(y, dtype=np.float64)
        delta = np.asarray(delta)
        z = np.asarray(z)
        x = np.asarray(x, dtype=np.float64)
        if y.ndim != 1 or len(y) == 0:
            raise SurvivalInputError("cohort must contain at least one subject")
        n = len(y)
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size == n else x.reshape(n, 0)
        if len(delta) != n or len(z) != n or x.shape[0] != n:
            raise SurvivalInputError("y, delta, z, x must have matching lengths")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise SurvivalInputError("observed times must be finite and >= 0")
        if not np.all(np.isin(delta, (0, 1))):
            raise SurvivalInputError("event flags must be 0 or 1")
        if not np.all(np.isin(z, (0, 1))):
            raise SurvivalInputError("arm indicators must be 0 or 1")
        self.y = y
        self.delta = delta.astype(np.int8)
        self.z = z.astype(np.int8)
        self.x = x
        self.y.setflags(write=False)
        self.delta.setflags(write=False)
        self.z.setflags(write=False)
        self.x.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def alpha_hat(self) -> float:
        return self.n1 / self.n

    def require_both_arms(self):
        if self.n0 == 0 or self.n1 == 0:
            raise SurvivalInputError("estimation requires at least one subject per arm")

    def record(self, i: int) -> SurvivalRecord:
        return SurvivalRecord(float(self.y[i]), int(self.delta[i]), int(self.z[i]), self.x[i])

    def arm_mask(self, z: int) -> np.ndarray:
        return self.z == z

    def subset(self, idx) -> "Cohort":
        return Cohort(self.y[idx], self.delta[idx], self.z[idx], self.x[idx])

    @classmethod
    def from_records(cls, records) -> "Cohort":
        if len(records) == 0:
            raise SurvivalInputError("cohort must contain at least one subject")
        y = [r.y for r in records]
        delta = [r.delta for r in records]
        z = [r.z for r in records]
        x = np.vstack([np.atleast_1d(r.x) for r in records])
        return cls(y, delta, z, x)


class SurvivalCurve:
    """Right-continuous nonincreasing step function with S(t) = 1 before the
    first jump and constant after the last."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if times.ndim != 1 or values.shape != times.shape:
            raise SurvivalInputError("jump times and values must be 1-d and aligned")
        if len(times) > 0:
            if np.any(np.diff(times) <= 0):
                raise SurvivalInputError("jump times must be strictly increasing")
            if times[0] < 0:
                raise SurvivalInputError("jump times must be >= 0")
            if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
                raise SurvivalInputError("survival values must lie in [0, 1]")
            if np.any(np.diff(values) > 1e-12):
                raise SurvivalInputError("survival values must be nonincreasing")
        self.times = times
        self.values = np.clip(values, 0.0, 1.0)
        self.times.setflags(write=False)
        self.values.setflags(write=False)

    def __call__(self, t):
        """S(t), right-continuous."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self._pick(idx, t)

    def left(self, t):
        """S(t-), the left limit: jumps strictly before t applied."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return self._pick(idx, t)

    def _pick(self, idx, t):
        scalar = np.isscalar(t) or np.ndim(t) == 0
        idx = np.atleast_1d(idx)
        if len(self.values) == 0:
            out = np.ones(idx.shape)
        else:
            out = np.where(idx < 0, 1.0, self.values[np.clip(idx, 0, None)])
        return float(out[0]) if scalar else out


def km_fit(times, events) -> SurvivalCurve:
    """Product-limit estimator over distinct event times.

    times : observed times (event or censoring)
    events : 1 if the event was observed at that time, 0 if censored
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    if times.ndim != 1 or len(times) == 0:
        raise SurvivalInputError("km_fit requires at least one observation")
    if len(events) != len(times):
        raise SurvivalInputError("times and events must have equal length")
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise SurvivalInputError("times must be finite and >= 0")
    if not np.all(np.isin(events, (0, 1))):
        raise SurvivalInputError("events must be 0 or 1")

    n = len(times)
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = np.asarray(events, dtype=np.int64)[order]

    uniq, start = np.unique(t_sorted, return_index=True)
    d = np.add.reduceat(e_sorted, start)          # events at each distinct time
    at_risk = n - start                           # subjects with Y >= that time

    jump = d > 0
    factors = 1.0 - d[jump] / at_risk[jump]
    return SurvivalCurve(uniq[jump], np.cumprod(factors))


class CensoringModel:
    """Kaplan-Meier model of the censoring distribution, with the matching
    Nelson-Aalen cumulative hazard and martingale-residual machinery.

    Built from one cohort; jump times are the distinct observed times with at
    least one censoring.  ``at_risk(s)`` counts every subject with Y >= s
    (events and censorings alike).
    """

    def __init__(self, cohort: Cohort):
        y = cohort.y
        censored = 1 - cohort.delta
        self.n = cohort.n
        self.y_sorted = np.sort(y)
        self.curve = km_fit(y, censored)

        order = np.argsort(y, kind="stable")
        y_s = y[order]
        c_s = censored[order].astype(np.int64)
        uniq, start = np.unique(y_s, return_index=True)
        d = np.add.reduceat(c_s, start)
        r = self.n - start
        jump = d > 0
        self.jump_times = uniq[jump]
        self.jump_counts = d[jump]
        self.jump_at_risk = r[jump]
        self.jump_dlam = self.jump_counts / self.jump_at_risk
        self.cum_dlam = np.cumsum(self.jump_dlam)
        for a in (self.jump_times, self.jump_counts, self.jump_at_risk,
                  self.jump_dlam, self.cum_dlam):
            a.setflags(write=False)

    def survival(self, t):
        return self.curve(t)

    def survival_left(self, t):
        return self.curve.left(t)

    def cum_hazard(self, t):
        """Nelson-Aalen cumulative censoring hazard at t (right-continuous)."""
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        scalar = np.isscalar(t) or np.ndim(t) == 0
        idx = np.atleast_1d(idx)
        if len(self.cum_dlam) == 0:
            out = np.zeros(idx.shape)
        else:
            out = np.where(idx < 0, 0.0, self.cum_dlam[np.clip(idx, 0, None)])
        return float(out[0]) if scalar else out

    def at_risk(self, s):
        """Number of subjects with Y >= s."""
        cnt = self.n - np.searchsorted(self.y_sorted, s, side="left")
        return int(cnt) if np.ndim(s) == 0 else cnt

    def martingale_terms(self, y, delta):
        """Per-subject increment matrix dM_Ci at each censoring jump.

        Returns an (n_subjects, n_jumps) array with entries
        I(Y_i = u_j, Delta_i = 0) - I(Y_i >= u_j) * dLambda_C(u_j).
        """
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        delta = np.asarray(delta).reshape(-1, 1)
        u = self.jump_times.reshape(1, -1)
        dn = (y == u) & (delta == 0)
        at_risk = y >= u
        return dn.astype(np.float64) - at_risk * self.jump_dlam


def fit_censoring(cohort: Cohort) -> CensoringModel:
    """Fit the censoring Kaplan-Meier by flipping the event flag."""
    return CensoringModel(cohort)


def risk_indicator(record: SurvivalRecord, t: float) -> int:
    """R_i(t): 1 if the subject is still informative at t.

    An observed event always counts (delta = 1 means T <= C); a censored
    subject counts only while its observed time exceeds t.
    """
    if t < 0:
        raise SurvivalInputError("t must be >= 0")
    return int(record.delta == 1 or record.y > t)


def risk_indicators(cohort: Cohort, t: float) -> np.ndarray:
    return ((cohort.delta == 1) | (cohort.y > t)).astype(np.float64)


def ipcw_weight(model: CensoringModel, record: SurvivalRecord, t: float,
                floor: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Estimated censoring survival at (t ^ Y_i)-, clamped below at `floor`."""
    if t < 0:
        raise SurvivalInputError("t must be >= 0")
    w = model.survival_left(min(t, record.y))
    return max(float(w), floor)


def ipcw_weights(model: CensoringModel, y, t: float,
                 floor: float = DEFAULT_WEIGHT_FLOOR):
    """Vector of pi_hat_i(t) over subjects plus the count of floored values."""
    w = model.curve.left(np.minimum(np.asarray(y, dtype=np.float64), t))
    w = np.atleast_1d(w)
    floored = int(np.count_nonzero(w < floor))
    if floored:
        w = np.maximum(w, floor)
    return w, floored


def martingale_residual(model: CensoringModel, record: SurvivalRecord, s: float) -> float:
    """M_Ci(s) = I(Y_i <= s, Delta_i = 0) - int_0^s I(Y_i >= u) dLambda_C(u)."""
    counted = float(record.y <= s and record.delta == 0)
    mask = (model.jump_times <= s) & (model.jump_times <= record.y)
    return counted - float(model.jump_dlam[mask].sum())


def warn_if_all_floored(n_contributing: int, n_floored: int, arm: int, t: float):
    if n_contributing > 0 and n_floored >= n_contributing:
        warnings.warn(
            f"all {n_contributing} IPCW weights in arm {arm} were floored at t={t:g}; "
            "censoring-positivity is under stress",
            RuntimeWarning,
            stacklevel=3,
        )
