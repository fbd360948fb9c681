"""Survival random forest adjustment backend.

Trees are grown on bootstrap samples; each node is split on the candidate
(variable, cutpoint) pair maximizing the absolute standardized log-rank
statistic among `mtry` randomly sampled variables, subject to both children
keeping at least `min_unique_deaths` distinct event times.  Terminal nodes
carry Kaplan-Meier curves of their in-bag rows; the out-of-bag prediction for
a training row averages only trees whose bootstrap sample excludes it.

The inner loops are numba-compiled; per-tree seeds are fixed up front so the
forest is bit-reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from survace.survival import Cohort, SurvivalInputError


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: int | None = None          # default: ceil(sqrt(p))
    min_unique_deaths: int = 3
    seed: int = 0
    bootstrap: bool = True           # False: every tree sees the identity sample
    split_rule: str = "log-rank"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_unique_deaths < 1:
            raise ValueError("min_unique_deaths must be >= 1")
        if self.split_rule != "log-rank":
            raise ValueError("only the log-rank split rule is implemented")

    def resolved_mtry(self, p: int) -> int:
        if self.mtry is not None:
            if self.mtry > p:
                raise SurvivalInputError(f"mtry={self.mtry} exceeds p={p}")
            return self.mtry
        return max(1, math.ceil(math.sqrt(p)))


@njit(cache=True)
def _count_unique_deaths(ys, ds):
    count = 0
    i = 0
    m = ys.size
    while i < m:
        j = i
        seen = False
        while j < m and ys[j] == ys[i]:
            if ds[j] == 1:
                seen = True
            j += 1
        if seen:
            count += 1
        i = j
    return count


@njit(cache=True)
def _node_event_groups(ys, ds):
    """Event-time group structure for time-sorted node rows.

    Returns (start, d_count, gmax, g_event): group start positions and event
    counts; gmax[i] is the last group whose time is <= ys[i] (at-risk span);
    g_event[i] is the group owning row i's event (or -1).
    """
    m = ys.size
    n_groups = 0
    i = 0
    while i < m:
        j = i
        seen = False
        while j < m and ys[j] == ys[i]:
            if ds[j] == 1:
                seen = True
            j += 1
        if seen:
            n_groups += 1
        i = j
    start = np.empty(n_groups, np.int64)
    d_count = np.zeros(n_groups, np.int64)
    gmax = np.full(m, -1, np.int64)
    g_event = np.full(m, -1, np.int64)
    g = -1
    i = 0
    while i < m:
        j = i
        seen = False
        d_here = 0
        while j < m and ys[j] == ys[i]:
            if ds[j] == 1:
                seen = True
                d_here += 1
            j += 1
        if seen:
            g += 1
            start[g] = i
            d_count[g] = d_here
        for q in range(i, j):
            gmax[q] = g
            if ds[q] == 1:
                g_event[q] = g
        i = j
    return start, d_count, gmax, g_event


@njit(cache=True)
def _best_cut_sweep(ys, ds, vs, d0, start, d_count, gmax, g_event):
    """Best cut for one variable: sweep distinct values ascending, maintaining
    the log-rank numerator/variance incrementally as rows join the left child.

    Returns (stat, cut, found); ties keep the lowest cutpoint.
    """
    m = ys.size
    n_groups = start.size
    if n_groups == 0:
        return -1.0, 0.0, False

    n_at = np.empty(n_groups, np.float64)
    coef = np.empty(n_groups, np.float64)
    en_prefix = np.empty(n_groups, np.float64)   # cumulative D_g / N_g
    acc = 0.0
    for g in range(n_groups):
        ng = float(m - start[g])
        dg = float(d_count[g])
        n_at[g] = ng
        if ng > 1.0 and dg < ng:
            coef[g] = dg * (ng - dg) / (ng * ng * (ng - 1.0))
        else:
            coef[g] = 0.0
        acc += dg / ng
        en_prefix[g] = acc

    order_v = np.argsort(vs)
    nl = np.zeros(n_groups, np.float64)
    dl = np.zeros(n_groups, np.int64)
    num = 0.0
    var = 0.0
    u_left = 0
    u_right = n_groups

    best_stat = -1.0
    best_cut = 0.0
    found = False

    k = 0
    while k < m:
        v_cur = vs[order_v[k]]
        while k < m and vs[order_v[k]] == v_cur:
            i = order_v[k]
            gm = gmax[i]
            if gm >= 0:
                num -= en_prefix[gm]
                for g in range(gm + 1):
                    var += coef[g] * (n_at[g] - 2.0 * nl[g] - 1.0)
                    nl[g] += 1.0
            if ds[i] == 1:
                ge = g_event[i]
                dl[ge] += 1
                num += 1.0
                if dl[ge] == 1:
                    u_left += 1
                if dl[ge] == d_count[ge]:
                    u_right -= 1
            k += 1
        if k < m:            # v_cur is not the maximum: it is a candidate cut
            if u_left >= d0 and u_right >= d0 and var > 1e-12:
                stat = abs(num) / math.sqrt(var)
                if stat > best_stat:
                    best_stat = stat
                    best_cut = v_cur
                    found = True
    return best_stat, best_cut, found


@njit(cache=True)
def _logrank_for_cut(ys, ds, vs, cut, d0):
    """Standardized log-rank for the split (v <= cut) on time-sorted node rows.

    Returns (stat, valid): valid requires both children to keep >= d0 unique
    death times and a positive variance.
    """
    m = ys.size
    n_risk = m
    nl_risk = 0
    for i in range(m):
        if vs[i] <= cut:
            nl_risk += 1
    num = 0.0
    var = 0.0
    ul = 0
    ur = 0
    i = 0
    while i < m:
        j = i
        d_tot = 0
        d_left = 0
        any_l = False
        any_r = False
        t_cur = ys[i]
        while j < m and ys[j] == t_cur:
            if ds[j] == 1:
                d_tot += 1
                if vs[j] <= cut:
                    d_left += 1
                    any_l = True
                else:
                    any_r = True
            j += 1
        if d_tot > 0:
            en = d_tot * nl_risk / n_risk
            num += d_left - en
            if n_risk > 1:
                var += (d_tot * (nl_risk / n_risk) * (1.0 - nl_risk / n_risk)
                        * (n_risk - d_tot) / (n_risk - 1.0))
            if any_l:
                ul += 1
            if any_r:
                ur += 1
        for q in range(i, j):
            n_risk -= 1
            if vs[q] <= cut:
                nl_risk -= 1
        i = j
    if ul < d0 or ur < d0 or var <= 0.0:
        return 0.0, False
    return abs(num) / math.sqrt(var), True


@njit(cache=True)
def _grow_forest(y, d, X, n_trees, mtry, d0, seeds, bootstrap):
    """Grow all trees; returns flat node/leaf-curve arrays plus cursors."""
    m, p = X.shape
    max_nodes = 2 * m + 3
    cap_nodes = n_trees * max_nodes
    cap_curve = n_trees * (m + 1)

    node_feature = np.full(cap_nodes, -1, np.int32)
    node_thresh = np.zeros(cap_nodes, np.float64)
    node_left = np.full(cap_nodes, -1, np.int32)
    node_right = np.full(cap_nodes, -1, np.int32)
    leaf_start = np.full(cap_nodes, -1, np.int64)
    leaf_len = np.zeros(cap_nodes, np.int64)
    roots = np.zeros(n_trees, np.int64)
    inbag = np.zeros((n_trees, m), np.uint16)
    curve_times = np.zeros(cap_curve, np.float64)
    curve_surv = np.zeros(cap_curve, np.float64)

    idx = np.empty(m, np.int64)
    tmp = np.empty(m, np.int64)
    var_buf = np.empty(p, np.int64)
    stack_node = np.empty(max_nodes, np.int64)
    stack_s = np.empty(max_nodes, np.int64)
    stack_e = np.empty(max_nodes, np.int64)

    node_cursor = 0
    curve_cursor = 0

    for b in range(n_trees):
        np.random.seed(seeds[b])
        if bootstrap:
            for i in range(m):
                r = np.random.randint(0, m)
                idx[i] = r
                inbag[b, r] += 1
        else:
            for i in range(m):
                idx[i] = i
                inbag[b, i] = 1

        roots[b] = node_cursor
        stack_node[0] = node_cursor
        stack_s[0] = 0
        stack_e[0] = m
        node_cursor += 1
        sp = 1

        while sp > 0:
            sp -= 1
            nid = stack_node[sp]
            s = stack_s[sp]
            e = stack_e[sp]
            mn = e - s

            ty = np.empty(mn, np.float64)
            td = np.empty(mn, np.int8)
            for i in range(mn):
                ty[i] = y[idx[s + i]]
                td[i] = d[idx[s + i]]
            order = np.argsort(ty)
            ys = ty[order]
            ds = np.empty(mn, np.int8)
            for i in range(mn):
                ds[i] = td[order[i]]

            best_stat = -1.0
            best_var = -1
            best_cut = 0.0

            if _count_unique_deaths(ys, ds) >= 2 * d0:
                # sample mtry variables, then scan them in index order
                for i in range(p):
                    var_buf[i] = i
                for i in range(mtry):
                    j = i + np.random.randint(0, p - i)
                    var_buf[i], var_buf[j] = var_buf[j], var_buf[i]
                sampled = np.sort(var_buf[:mtry])

                g_start, g_d, gmax, g_event = _node_event_groups(ys, ds)
                vs = np.empty(mn, np.float64)
                for si in range(mtry):
                    var = sampled[si]
                    for i in range(mn):
                        vs[i] = X[idx[s + order[i]], var]
                    stat, cut, ok = _best_cut_sweep(ys, ds, vs, d0,
                                                    g_start, g_d, gmax, g_event)
                    if ok and stat > best_stat:
                        best_stat = stat
                        best_var = var
                        best_cut = cut

            if best_var >= 0:
                node_feature[nid] = best_var
                node_thresh[nid] = best_cut
                # stable partition of idx[s:e] into (<= cut | > cut)
                nl = 0
                for i in range(s, e):
                    if X[idx[i], best_var] <= best_cut:
                        tmp[nl] = idx[i]
                        nl += 1
                nr = nl
                for i in range(s, e):
                    if X[idx[i], best_var] > best_cut:
                        tmp[nr] = idx[i]
                        nr += 1
                for i in range(mn):
                    idx[s + i] = tmp[i]
                left_id = node_cursor
                right_id = node_cursor + 1
                node_cursor += 2
                node_left[nid] = left_id
                node_right[nid] = right_id
                stack_node[sp] = right_id
                stack_s[sp] = s + nl
                stack_e[sp] = e
                sp += 1
                stack_node[sp] = left_id
                stack_s[sp] = s
                stack_e[sp] = s + nl
                sp += 1
            else:
                # terminal: Kaplan-Meier of the node rows
                leaf_start[nid] = curve_cursor
                surv = 1.0
                n_risk = mn
                i = 0
                while i < mn:
                    j = i
                    d_tot = 0
                    t_cur = ys[i]
                    while j < mn and ys[j] == t_cur:
                        if ds[j] == 1:
                            d_tot += 1
                        j += 1
                    if d_tot > 0:
                        surv *= 1.0 - d_tot / n_risk
                        curve_times[curve_cursor] = t_cur
                        curve_surv[curve_cursor] = surv
                        curve_cursor += 1
                    n_risk -= j - i
                    i = j
                leaf_len[nid] = curve_cursor - leaf_start[nid]

    return (node_feature, node_thresh, node_left, node_right,
            leaf_start, leaf_len, roots, inbag,
            curve_times, curve_surv, node_cursor, curve_cursor)


@njit(cache=True)
def _forest_eval(node_feature, node_thresh, node_left, node_right,
                 leaf_start, leaf_len, curve_times, curve_surv,
                 roots, xq, times, mask):
    """Mean terminal-node survival over unmasked trees; times must ascend.

    Returns (mean matrix, per-row tree counts); rows with zero trees are 0.
    """
    nq = xq.shape[0]
    nt = times.size
    n_trees = roots.size
    acc = np.zeros((nq, nt), np.float64)
    cnt = np.zeros(nq, np.int64)
    for q in range(nq):
        for b in range(n_trees):
            if mask[b, q] == 0:
                continue
            nid = roots[b]
            while node_feature[nid] >= 0:
                if xq[q, node_feature[nid]] <= node_thresh[nid]:
                    nid = node_left[nid]
                else:
                    nid = node_right[nid]
            st = leaf_start[nid]
            ln = leaf_len[nid]
            j = 0
            sv = 1.0
            for ti in range(nt):
                t = times[ti]
                while j < ln and curve_times[st + j] <= t:
                    sv = curve_surv[st + j]
                    j += 1
                acc[q, ti] += sv
            cnt[q] += 1
        if cnt[q] > 0:
            for ti in range(nt):
                acc[q, ti] /= cnt[q]
    return acc, cnt


class SurvivalForest:
    """Fitted survival random forest for one arm (immutable)."""

    def __init__(self, config, p, arm_indices, x_train, nodes, inbag):
        self.config = config
        self.p = p
        self.arm_indices = arm_indices          # cohort rows this arm trained on
        self.x_train = x_train
        (self.node_feature, self.node_thresh, self.node_left, self.node_right,
         self.leaf_start, self.leaf_len, self.roots,
         self.curve_times, self.curve_surv) = nodes
        self.inbag = inbag                      # (n_trees, m) bootstrap counts

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def n_train(self) -> int:
        return self.inbag.shape[1]

    def _eval(self, times, xq, mask):
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        order = np.argsort(times, kind="stable")
        mean, cnt = _forest_eval(
            self.node_feature, self.node_thresh, self.node_left, self.node_right,
            self.leaf_start, self.leaf_len, self.curve_times, self.curve_surv,
            self.roots, np.ascontiguousarray(xq, dtype=np.float64),
            times[order], mask)
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        return mean[:, inv], cnt

    def predict(self, times, x) -> np.ndarray:
        """All-tree mean survival, shape (n_subjects, n_times)."""
        x = np.atleast_2d(x)
        mask = np.ones((self.n_trees, x.shape[0]), dtype=np.uint8)
        mean, _ = self._eval(times, x, mask)
        return mean

    def predict_at(self, t: float, x) -> np.ndarray:
        return self.predict([t], x)[:, 0]

    def oob_mask(self) -> np.ndarray:
        return (self.inbag == 0).astype(np.uint8)

    def oob_matrix(self, times) -> np.ndarray:
        """OOB survival matrix for the training rows, shape (m, n_times)."""
        mask = self.oob_mask()
        mean, cnt = self._eval(times, self.x_train, mask)
        if np.any(cnt == 0):
            bad = int(np.flatnonzero(cnt == 0)[0])
            raise SurvivalInputError(
                f"training row {bad} is in-bag for every tree; "
                f"increase n_trees (currently {self.n_trees})")
        return mean


def fit_srf(cohort: Cohort, arm: int, config: ForestConfig) -> SurvivalForest:
    """Grow a survival random forest on one arm of the cohort."""
    mask = cohort.arm_mask(arm)
    if not mask.any():
        raise SurvivalInputError(f"arm {arm} has no subjects")
    arm_indices = np.flatnonzero(mask)
    y = np.ascontiguousarray(cohort.y[mask])
    d = np.ascontiguousarray(cohort.delta[mask].astype(np.int8))
    x = np.ascontiguousarray(cohort.x[mask])
    p = x.shape[1]
    if p == 0:
        raise SurvivalInputError("survival forest requires at least one covariate")
    mtry = config.resolved_mtry(p)
    d0 = config.min_unique_deaths
    if len(np.unique(y[d == 1])) < d0:
        raise SurvivalInputError(
            f"arm {arm} has fewer than {d0} unique event times")

    seeds = np.random.SeedSequence(config.seed).generate_state(
        config.n_trees, dtype=np.uint32).astype(np.int64)
    (nf, nt, nl, nr, ls, ll, roots, inbag, ct, cs,
     n_nodes, n_curve) = _grow_forest(
        y, d, x, config.n_trees, mtry, d0, seeds, config.bootstrap)

    nodes = (nf[:n_nodes].copy(), nt[:n_nodes].copy(),
             nl[:n_nodes].copy(), nr[:n_nodes].copy(),
             ls[:n_nodes].copy(), ll[:n_nodes].copy(), roots,
             ct[:n_curve].copy(), cs[:n_curve].copy())
    return SurvivalForest(config, p, arm_indices, x, nodes, inbag)


def oob_predict(forest: SurvivalForest, t: float, i: int) -> float:
    """OOB survival at t for training row i (arm-local index)."""
    if not 0 <= i < forest.n_train:
        raise IndexError(f"training index {i} out of range")
    raise_if_never_oob(forest, i)
    mask = np.ascontiguousarray(forest.oob_mask()[:, [i]])
    mean, _ = forest._eval([t], forest.x_train[[i]], mask)
    return float(mean[0, 0])


def raise_if_never_oob(forest: SurvivalForest, i: int):
    if np.all(forest.inbag[:, i] > 0):
        raise SurvivalInputError(
            f"training row {i} is in-bag for every tree; "
            f"increase n_trees (currently {forest.n_trees})")
