"""Independent brute-force oracles used by the acceptance suite.

Everything here recomputes the defining sums with naive per-subject loops and
its own step-function walks; none of it shares code paths with the library
implementations it checks.
"""

import numpy as np


def km_eval(times, events, t):
    """Product-limit survival at t by direct looping."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=int)
    s = 1.0
    for u in sorted(set(times[events == 1])):
        if u > t:
            break
        d = int(np.sum((times == u) & (events == 1)))
        r = int(np.sum(times >= u))
        s *= 1.0 - d / r
    return s


def censor_km_left(y, delta, t):
    """Censoring-distribution KM left limit S_C(t-) by direct looping."""
    y = np.asarray(y, dtype=float)
    flipped = 1 - np.asarray(delta, dtype=int)
    s = 1.0
    for u in sorted(set(y[flipped == 1])):
        if u >= t:
            break
        d = int(np.sum((y == u) & (flipped == 1)))
        r = int(np.sum(y >= u))
        s *= 1.0 - d / r
    return s


def censor_jumps(y, delta):
    """(times, dLambda, at-risk) of the censoring Nelson-Aalen by looping."""
    y = np.asarray(y, dtype=float)
    flipped = 1 - np.asarray(delta, dtype=int)
    out = []
    for u in sorted(set(y[flipped == 1])):
        d = int(np.sum((y == u) & (flipped == 1)))
        r = int(np.sum(y >= u))
        out.append((u, d / r, r))
    return out


def pi_weight(y, delta, y_i, t, floor=1e-3):
    return max(censor_km_left(y, delta, min(t, y_i)), floor)


def risk(delta_i, y_i, t):
    return 1.0 if (delta_i == 1 or y_i > t) else 0.0


def tau0(cohort, t):
    s = {0: 0.0, 1: 0.0}
    n = {0: 0, 1: 0}
    for i in range(cohort.n):
        z = int(cohort.z[i])
        n[z] += 1
        if cohort.y[i] > t:
            s[z] += 1.0 / pi_weight(cohort.y, cohort.delta, cohort.y[i], t)
    return s[1] / n[1] - s[0] / n[0]


def tau1(mu1, mu0):
    return float(np.mean(np.asarray(mu1) - np.asarray(mu0)))


def tau2(cohort, t, mu1, mu0):
    total = tau1(mu1, mu0)
    s = {0: 0.0, 1: 0.0}
    n = {0: 0, 1: 0}
    for i in range(cohort.n):
        z = int(cohort.z[i])
        n[z] += 1
        w = (1.0 / pi_weight(cohort.y, cohort.delta, cohort.y[i], t)
             if cohort.y[i] > t else 0.0)
        s[z] += w - (mu1[i] if z == 1 else mu0[i])
    return total + s[1] / n[1] - s[0] / n[0]


def tau3(cohort, t, mu1, mu0):
    total = tau1(mu1, mu0)
    s = {0: 0.0, 1: 0.0}
    n = {0: 0, 1: 0}
    for i in range(cohort.n):
        z = int(cohort.z[i])
        n[z] += 1
        r = risk(int(cohort.delta[i]), cohort.y[i], t)
        if r:
            alive = 1.0 if cohort.y[i] > t else 0.0
            mu = mu1[i] if z == 1 else mu0[i]
            s[z] += r * (alive - mu) / pi_weight(cohort.y, cohort.delta,
                                                 cohort.y[i], t)
    return total + s[1] / n[1] - s[0] / n[0]


def u1_column(cohort, t, floor=1e-3):
    """Arm-centered crude-estimator influence terms."""
    a = cohort.n1 / cohort.n
    sc = max(censor_km_left(cohort.y, cohort.delta, t), floor)
    w = np.array([(1.0 if cohort.y[i] > t else 0.0) / sc
                  for i in range(cohort.n)])
    mu = {z: float(w[cohort.z == z].mean()) for z in (0, 1)}
    out = np.empty(cohort.n)
    for i in range(cohort.n):
        z = int(cohort.z[i])
        bracket = a if z == 1 else -(1 - a)
        out[i] = (w[i] - mu[z]) / bracket
    return out


def u3_column(cohort, t, tau_scale):
    jumps = censor_jumps(cohort.y, cohort.delta)
    out = np.zeros(cohort.n)
    for i in range(cohort.n):
        acc = 0.0
        for u, dlam, r in jumps:
            if u > t:
                break
            dn = 1.0 if (cohort.y[i] == u and cohort.delta[i] == 0) else 0.0
            at = 1.0 if cohort.y[i] >= u else 0.0
            acc += (cohort.n / r) * (dn - at * dlam)
        out[i] = tau_scale * acc
    return out


def u4_column(cohort, t, mu1, mu0, floor=1e-3):
    a = cohort.n1 / cohort.n
    t2 = tau2(cohort, t, mu1, mu0)
    out = np.empty(cohort.n)
    for i in range(cohort.n):
        z = int(cohort.z[i])
        sign = 1.0 if z == 1 else -1.0
        br = a if z == 1 else 1 - a
        alive = 1.0 if cohort.y[i] > t else 0.0
        pi = pi_weight(cohort.y, cohort.delta, cohort.y[i], t, floor)
        mo = mu1[i] if z == 1 else mu0[i]
        out[i] = mu1[i] - mu0[i] + sign / br * (alive / pi - mo) - t2
    return out


def u5_column(cohort, t, mu1, mu0, floor=1e-3):
    a = cohort.n1 / cohort.n
    t3 = tau3(cohort, t, mu1, mu0)
    out = np.empty(cohort.n)
    for i in range(cohort.n):
        z = int(cohort.z[i])
        sign = 1.0 if z == 1 else -1.0
        br = a if z == 1 else 1 - a
        alive = 1.0 if cohort.y[i] > t else 0.0
        r = risk(int(cohort.delta[i]), cohort.y[i], t)
        pi = pi_weight(cohort.y, cohort.delta, cohort.y[i], t, floor)
        mo = mu1[i] if z == 1 else mu0[i]
        out[i] = mu1[i] - mu0[i] + sign / br * (r * (alive - mo) / pi) - t3
    return out
