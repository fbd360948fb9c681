"""Cox proportional-hazards working model: Newton-Raphson partial-likelihood
fit with Breslow baseline, used as one adjustment backend.

Predicted survival is the product-limit transform of the Breslow increments
raised to the relative risk, S(t|x) = [prod_{s<=t}(1 - dL0(s))]^exp(x'b).
With no covariates this reproduces the Kaplan-Meier curve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from survace.survival import Cohort, SurvivalInputError

MAX_NEWTON_ITER = 50
GRAD_TOL = 1e-8


class CoxConvergenceError(RuntimeError):
    """Newton-Raphson failed: singular information or no likelihood progress.

    Carries the iteration count and last gradient norm; expected for designs
    with many covariates, where the partial likelihood is flat or separable.
    """

    def __init__(self, message, n_iter=0, grad_norm=np.nan):
        super().__init__(message)
        self.n_iter = n_iter
        self.grad_norm = grad_norm


class _PartialLikelihood:
    """Breslow-ties partial likelihood on one arm, sorted once at setup.

    Provides the log likelihood, gradient, Hessian, and per-coordinate
    derivatives for coordinate descent.
    """

    def __init__(self, y, delta, x):
        order = np.argsort(y, kind="stable")
        self.y = np.asarray(y, dtype=np.float64)[order]
        self.delta = np.asarray(delta, dtype=np.int64)[order]
        self.x = np.asarray(x, dtype=np.float64)[order]
        self.n, self.p = self.x.shape

        uniq, start = np.unique(self.y, return_index=True)
        d_at = np.add.reduceat(self.delta, start)
        keep = d_at > 0
        self.event_times = uniq[keep]
        self.event_counts = d_at[keep]
        self.risk_start = start[keep]            # first sorted row with y >= s_k
        self.event_rows = np.flatnonzero(self.delta == 1)
        self.n_events = int(self.delta.sum())

    def _risk_sums(self, w):
        """Reverse cumulative sum evaluated at each distinct event time."""
        rc = np.cumsum(w[::-1], axis=0)[::-1]
        return rc[self.risk_start]

    def loglik(self, beta):
        return self.loglik_eta(self.x @ beta)

    def loglik_eta(self, eta):
        c = eta.max() if self.n else 0.0
        s0 = self._risk_sums(np.exp(eta - c))
        return float(eta[self.event_rows].sum()
                     - np.sum(self.event_counts * (np.log(s0) + c)))

    def loglik_grad(self, beta):
        eta = self.x @ beta
        c = eta.max()
        w = np.exp(eta - c)
        s0 = self._risk_sums(w)
        s1 = self._risk_sums(w[:, None] * self.x)
        ll = float(eta[self.event_rows].sum()
                   - np.sum(self.event_counts * (np.log(s0) + c)))
        grad = self.x[self.event_rows].sum(axis=0) \
            - (self.event_counts[:, None] * s1 / s0[:, None]).sum(axis=0)
        return ll, grad

    def loglik_grad_hess(self, beta):
        eta = self.x @ beta
        c = eta.max()
        w = np.exp(eta - c)
        s0 = self._risk_sums(w)
        s1 = self._risk_sums(w[:, None] * self.x)
        s2 = self._risk_sums(np.einsum("i,ij,ik->ijk", w, self.x, self.x))
        ll = float(eta[self.event_rows].sum()
                   - np.sum(self.event_counts * (np.log(s0) + c)))
        mu = s1 / s0[:, None]
        grad = self.x[self.event_rows].sum(axis=0) - (self.event_counts[:, None] * mu).sum(axis=0)
        v = s2 / s0[:, None, None] - np.einsum("kj,kl->kjl", mu, mu)
        hess = -np.einsum("k,kjl->jl", self.event_counts.astype(np.float64), v)
        return ll, grad, hess

    def coord_derivs(self, eta, j):
        """First and second derivative of the log likelihood in coordinate j."""
        c = eta.max()
        w = np.exp(eta - c)
        xj = self.x[:, j]
        s0 = self._risk_sums(w)
        s1 = self._risk_sums(w * xj)
        s2 = self._risk_sums(w * xj * xj)
        mu = s1 / s0
        grad = xj[self.event_rows].sum() - float(np.sum(self.event_counts * mu))
        hess = -float(np.sum(self.event_counts * (s2 / s0 - mu * mu)))
        return grad, hess

    def breslow(self, beta):
        """Breslow baseline-hazard increments at the distinct event times."""
        eta = self.x @ beta
        c = eta.max()
        s0 = self._risk_sums(np.exp(eta - c))
        dlam = self.event_counts / (s0 * np.exp(c))
        return self.event_times, dlam


@dataclass
class CoxFit:
    """Fitted Cox working model for one arm."""

    coefficients: np.ndarray
    baseline_times: np.ndarray
    baseline_survival: np.ndarray   # product-limit of Breslow increments
    n_iter: int
    grad_norm: float
    loglik: float

    def predict(self, times, x) -> np.ndarray:
        """Survival matrix, shape (n_subjects, n_times)."""
        return _predict_survival(self, times, x)

    def predict_at(self, t: float, x) -> np.ndarray:
        return self.predict([t], x)[:, 0]


def _baseline_survival_from_dlam(dlam):
    return np.cumprod(np.maximum(1.0 - dlam, 0.0))


def _predict_survival(fit, times, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    idx = np.searchsorted(fit.baseline_times, times, side="right") - 1
    s0 = np.concatenate([[1.0], fit.baseline_survival])[idx + 1]
    if fit.coefficients.size == 0:
        return np.broadcast_to(s0, (x.shape[0], len(times))).copy()
    rr = np.exp(np.clip(x @ fit.coefficients, -200.0, 200.0))
    # 0^r with r > 0 is 0; keep it explicit to avoid warnings
    out = np.empty((x.shape[0], len(times)))
    pos = s0 > 0
    with np.errstate(divide="ignore"):
        logs0 = np.where(pos, np.log(np.where(pos, s0, 1.0)), -np.inf)
    out[:] = np.exp(rr[:, None] * logs0[None, :])
    return out


def _arm_subset(cohort: Cohort, arm: int):
    mask = cohort.arm_mask(arm)
    if not mask.any():
        raise SurvivalInputError(f"arm {arm} has no subjects")
    y, delta, x = cohort.y[mask], cohort.delta[mask], cohort.x[mask]
    if delta.sum() == 0:
        raise SurvivalInputError(f"arm {arm} has no events")
    return y, delta, x


def fit_cox(cohort: Cohort, arm: int) -> CoxFit:
    """Newton-Raphson maximum partial likelihood on one arm.

    Raises CoxConvergenceError when the information matrix is singular or the
    step search cannot improve the likelihood (separation, p too large).
    """
    y, delta, x = _arm_subset(cohort, arm)
    pl = _PartialLikelihood(y, delta, x)
    p = pl.p
    beta = np.zeros(p)

    if p == 0:
        ll = pl.loglik(beta)
        times, dlam = pl.breslow(beta)
        return CoxFit(beta, times, _baseline_survival_from_dlam(dlam), 0, 0.0, ll)

    ll, grad, hess = pl.loglik_grad_hess(beta)
    for it in range(1, MAX_NEWTON_ITER + 1):
        gnorm = float(np.max(np.abs(grad)))
        info = -hess
        eigs = np.linalg.eigvalsh(info)
        if eigs[-1] <= 0 or eigs[0] <= 1e-10 * eigs[-1]:
            raise CoxConvergenceError(
                "singular information matrix", n_iter=it - 1, grad_norm=gnorm)
        if gnorm < GRAD_TOL:
            times, dlam = pl.breslow(beta)
            return CoxFit(beta, times, _baseline_survival_from_dlam(dlam),
                          it - 1, gnorm, ll)
        step = np.linalg.solve(info, grad)
        if not np.all(np.isfinite(step)):
            raise CoxConvergenceError(
                "non-finite Newton step", n_iter=it - 1, grad_norm=gnorm)
        # step halving until the likelihood improves
        for _ in range(40):
            cand = beta + step
            ll_new = pl.loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            step = step / 2.0
        else:
            raise CoxConvergenceError(
                "no likelihood progress (separated or flat likelihood)",
                n_iter=it, grad_norm=gnorm)
        beta = cand
        ll, grad, hess = pl.loglik_grad_hess(beta)

    raise CoxConvergenceError(
        f"no convergence in {MAX_NEWTON_ITER} iterations",
        n_iter=MAX_NEWTON_ITER, grad_norm=float(np.max(np.abs(grad))))
