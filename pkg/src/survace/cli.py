"""Command-line interface: `estimate` on a cohort file, `simulate` for Monte
Carlo studies, and `calibrate-t0` / `truth` for auditing the DGP quantities.

Configuration comes from an optional key=value text file plus flag overrides
(flags win).  The SURVACE_OUT environment variable overrides the output
directory.  Runs with the same configuration and seed produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from scipy.stats import norm

from survace import __version__
from survace.adjustment import derive_seed, fit_adjustment, predict_pair
from survace.dataio import load_cohort, write_table
from survace.estimators import (
    ESTIMATOR_TAGS,
    TimeGrid,
    ace_curve,
    average_ace,
    quadrature_coefficients,
)
from survace.forest import ForestConfig
from survace.inference import (
    asymptotic_band,
    averaged_ace_inference,
    cov_tau0,
    cov_tau2,
    cov_tau3,
    percentile_interval,
)
from survace.simulation import (
    DgpSetting,
    StudyConfig,
    calibrate_t0,
    run_study,
    true_ace,
)
from survace.survival import fit_censoring

ENV_OUT = "SURVACE_OUT"


def parse_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _floats(text):
    return [float(v) for v in str(text).split(",") if v != ""]


def _estimators(text):
    tags = [t.strip() for t in str(text).split(",") if t.strip()]
    for t in tags:
        if t not in ESTIMATOR_TAGS:
            raise SystemExit(f"unknown estimator {t!r}; choose from {ESTIMATOR_TAGS}")
    return tuple(tags)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="survace",
        description="Covariate-adjusted survival-scale ACE estimation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    est = sub.add_parser("estimate", help="estimate ACE curves from a cohort CSV")
    common(est)
    est.add_argument("--data", help="cohort CSV (time,event,arm,x1..xp)")
    est.add_argument("--backend", choices=("cox", "lasso", "srf"), default=None)
    est.add_argument("--estimators", default=None,
                     help="comma list from tau0,tau1,tau2,tau3")
    est.add_argument("--grid", default=None,
                     help="'t0=VALUE[,points=N]' or explicit 'times=a,b,c'")
    est.add_argument("--bootstrap", type=int, default=None, metavar="B",
                     help="bootstrap replicates; 0 = asymptotic only")
    est.add_argument("--level", type=float, default=None)
    est.add_argument("--trees", type=int, default=None)

    sim = sub.add_parser("simulate", help="run the Monte Carlo study")
    common(sim)
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--backend", choices=("cox", "lasso", "srf"), default=None)
    sim.add_argument("--estimators", default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--p", type=int, default=None)
    sim.add_argument("--k", type=int, default=None)
    sim.add_argument("--rho", type=float, default=None)
    sim.add_argument("--alpha", type=float, default=None)
    sim.add_argument("--beta", default=None, help="comma list to sweep")
    sim.add_argument("--s", default=None, help="comma list of effect sizes")
    sim.add_argument("--interaction", action="store_true", default=None,
                     help="use the (s0=0, s1=s) family instead of s0=s1=s")
    sim.add_argument("--trees", type=int, default=None)
    sim.add_argument("--boot-tau1", type=int, default=None)
    sim.add_argument("--jobs", type=int, default=None,
                     help="worker processes; results are identical for any value")
    sim.add_argument("--grid", default=None, help="unused in simulate mode")

    cal = sub.add_parser("calibrate-t0", help="print the calibrated horizon")
    common(cal)
    for flag, typ in (("--n", int), ("--p", int), ("--k", int), ("--rho", float),
                      ("--alpha", float), ("--beta", float), ("--s0", float),
                      ("--s1", float), ("--censor-max", float)):
        cal.add_argument(flag, type=typ, default=None)

    tru = sub.add_parser("truth", help="print the large-N Monte Carlo ACE")
    common(tru)
    for flag, typ in (("--n", int), ("--p", int), ("--k", int), ("--rho", float),
                      ("--alpha", float), ("--beta", float), ("--s0", float),
                      ("--s1", float), ("--censor-max", float)):
        tru.add_argument(flag, type=typ, default=None)
    tru.add_argument("--t", type=float, default=None,
                     help="evaluation time; default: calibrated t0")
    tru.add_argument("--draws", type=int, default=None)
    return parser


def merged_options(args, defaults):
    """File config under flag overrides under built-in defaults."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        opts.update(parse_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        opts[key] = value
    out_env = os.environ.get(ENV_OUT)
    if out_env:
        opts["out"] = out_env
    return opts


def _setting_from(opts) -> DgpSetting:
    return DgpSetting(
        n=int(opts.get("n", 100)),
        alpha=float(opts.get("alpha", 0.5)),
        p=int(opts.get("p", 10)),
        k=int(opts.get("k", 10)),
        rho=float(opts.get("rho", 0.8)),
        beta=float(opts.get("beta", 0.0)),
        s0=float(opts.get("s0", 0.0)),
        s1=float(opts.get("s1", 0.0)),
        censor_max=float(opts.get("censor_max", 2.5)),
    )


def _parse_grid(spec, cohort):
    if spec:
        parts = dict(kv.partition("=")[::2] for kv in str(spec).split(",")
                     if "=" in kv)
        if "times" in str(spec) and "=" in str(spec):
            # allow times=a;b;c (semicolon-separated to survive the comma split)
            raw = str(spec).split("times=", 1)[1]
            times = [float(v) for v in raw.replace(";", ",").split(",") if v]
            return TimeGrid(np.asarray(sorted(times)), t0=max(times))
        t0 = float(parts.get("t0", 0) or 0)
        points = int(parts.get("points", 50) or 50)
        if t0 > 0:
            return TimeGrid.default(t0, points)
    t0 = float(np.median(cohort.y))
    return TimeGrid.default(t0, 50)


def _write_manifest(path, opts, lines=()):
    rows = [f"survace {__version__}"]
    for key in sorted(opts):
        rows.append(f"{key} = {opts[key]}")
    rows.extend(lines)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(str(r) for r in rows) + "\n")


def _estimate_recipe(backend, trees, estimator):
    """fit_and_estimate closure for bootstrap_ci: refits everything."""
    def run(cohort, grid, seed):
        censoring = fit_censoring(cohort)
        mu = None
        if estimator != "tau0":
            m1, m0 = fit_adjustment(
                cohort, backend, seed=seed,
                forest_config=ForestConfig(n_trees=trees, seed=derive_seed(seed, 1)))
            mu = predict_pair(m1, m0, grid.times, cohort)
        return ace_curve(estimator, cohort, censoring, mu, grid).estimates
    return run


def cmd_estimate(args) -> int:
    opts = merged_options(args, {
        "backend": "srf", "estimators": "tau0,tau1,tau2,tau3", "seed": 0,
        "out": "survace-out", "bootstrap": 0, "level": 0.95, "trees": 500,
    })
    if "data" not in opts:
        raise SystemExit("estimate mode requires --data")
    cohort = load_cohort(opts["data"])
    estimators = _estimators(opts["estimators"])
    backend = str(opts["backend"])
    seed = int(opts["seed"])
    level = float(opts["level"])
    b_boot = int(opts["bootstrap"])
    trees = int(opts["trees"])
    grid = _parse_grid(opts.get("grid"), cohort)
    out_dir = str(opts["out"])

    censoring = fit_censoring(cohort)
    needs_model = any(e != "tau0" for e in estimators)
    mu = None
    failures = []
    if needs_model:
        try:
            m1, m0 = fit_adjustment(
                cohort, backend, seed=seed,
                forest_config=ForestConfig(n_trees=trees, seed=derive_seed(seed, 1)))
            mu = predict_pair(m1, m0, grid.times, cohort)
        except Exception as exc:          # noqa: BLE001 - soft NA semantics
            failures.append(f"{backend} adjustment failed: {exc}")

    curve_rows = []
    summary_rows = []
    w = np.ones(len(grid))
    for tag in estimators:
        model_missing = tag != "tau0" and mu is None
        if model_missing:
            for t in grid.times:
                curve_rows.append([tag, t, "NA", "NA", "NA", "NA"])
            summary_rows.append([tag, "NA", "NA", "NA"])
            continue
        curve = ace_curve(tag, cohort, censoring, mu, grid)
        if b_boot > 0:
            reps, n_fail = _bootstrap_curves(tag, cohort, backend, trees, grid,
                                             b_boot, seed)
            failures.extend([f"{tag} bootstrap replicate failures: {n_fail}"]
                            if n_fail else [])
            lower, upper = percentile_interval(reps, level)
            lower = np.minimum(lower, curve.estimates)
            upper = np.maximum(upper, curve.estimates)
            se_t = reps.std(axis=0, ddof=1)
            c = quadrature_coefficients(grid.times, w)
            avg = average_ace(curve, w)
            avg_reps = reps @ c
            se_avg = float(np.std(avg_reps, ddof=1))
            p_avg = float(2 * norm.sf(abs(avg) / se_avg)) if se_avg > 0 else math.nan
            for j, t in enumerate(grid.times):
                curve_rows.append([tag, t, curve.estimates[j], se_t[j],
                                   lower[j], upper[j]])
            summary_rows.append([tag, avg, se_avg, p_avg])
        elif tag == "tau1":
            # no asymptotic theory for tau1: NA without bootstrap
            for j, t in enumerate(grid.times):
                curve_rows.append([tag, t, curve.estimates[j], "NA", "NA", "NA"])
            summary_rows.append([tag, average_ace(curve, w), "NA", "NA"])
        else:
            cov = {"tau0": lambda: cov_tau0(cohort, censoring, grid),
                   "tau2": lambda: cov_tau2(cohort, censoring, mu, grid),
                   "tau3": lambda: cov_tau3(cohort, censoring, mu, grid)}[tag]()
            band = asymptotic_band(tag, curve.estimates, cov, cohort.n, level)
            se = np.sqrt(np.clip(np.diag(cov.matrix), 0, None) / cohort.n)
            for j, t in enumerate(grid.times):
                curve_rows.append([tag, t, curve.estimates[j], se[j],
                                   band.lower[j], band.upper[j]])
            summary_rows.append(list((tag, *averaged_ace_inference(curve, cov, cohort.n, w))))

    write_table(os.path.join(out_dir, "ace_curves.csv"),
                ["estimator", "t", "estimate", "se", "lo", "hi"], curve_rows)
    write_table(os.path.join(out_dir, "summary.csv"),
                ["estimator", "est", "se", "p_value"], summary_rows)
    _write_manifest(os.path.join(out_dir, "run_manifest.txt"), opts,
                    [f"grid_t0 = {grid.t0:.12g}",
                     f"grid_points = {len(grid)}",
                     f"n = {cohort.n}", f"p = {cohort.p}",
                     f"soft_failures = {len(failures)}", *failures])
    return 0


def _bootstrap_curves(tag, cohort, backend, trees, grid, b_boot, seed):
    """Replicate estimate curves (B x T) from nonparametric resampling."""
    recipe = _estimate_recipe(backend, trees, tag)
    children = np.random.SeedSequence(
        derive_seed(seed, 7, ESTIMATOR_TAGS.index(tag))).spawn(b_boot)
    rows = []
    n_fail = 0
    for child in children:
        rng = np.random.default_rng(child)
        for _ in range(1000):
            idx = rng.integers(0, cohort.n, size=cohort.n)
            if 0 < cohort.z[idx].sum() < cohort.n:
                break
        try:
            rows.append(recipe(cohort.subset(idx), grid,
                               int(rng.integers(0, 2**31 - 1))))
        except Exception:   # noqa: BLE001
            n_fail += 1
    if len(rows) < max(2, 0.9 * b_boot):
        raise SystemExit(f"bootstrap for {tag}: only {len(rows)}/{b_boot} "
                         "replicates succeeded")
    return np.vstack(rows), n_fail


def cmd_simulate(args) -> int:
    opts = merged_options(args, {
        "backend": "srf", "estimators": "tau0,tau1,tau2,tau3", "seed": 0,
        "out": "survace-out", "reps": 100, "beta": "0.5", "s": "0.5",
        "interaction": False, "trees": 150, "boot_tau1": 100,
        "n": 100, "p": 10, "k": 10, "rho": 0.8, "alpha": 0.5,
        "censor_max": 2.5, "truth_draws": 1_000_000, "jobs": 1,
    })
    out_dir = str(opts["out"])
    estimators = _estimators(opts["estimators"])
    betas = _floats(opts["beta"])
    svals = _floats(opts["s"])
    interaction = str(opts["interaction"]).lower() in ("1", "true", "yes")
    base = dict(n=int(opts["n"]), p=int(opts["p"]), k=int(opts["k"]),
                rho=float(opts["rho"]), alpha=float(opts["alpha"]),
                censor_max=float(opts["censor_max"]))
    config = StudyConfig(
        backend=str(opts["backend"]), estimators=estimators,
        n_reps=int(opts["reps"]), seed=int(opts["seed"]),
        forest_trees=int(opts["trees"]), boot_tau1=int(opts["boot_tau1"]),
        truth_draws=int(opts["truth_draws"]))

    report_rows, power_rows, relmse_rows, manifest_lines = [], [], [], []
    for beta in betas:
        for s in svals:
            setting = DgpSetting(beta=beta, s0=0.0 if interaction else s,
                                 s1=s, **base)
            report = run_study(setting, config, n_jobs=int(opts["jobs"]))
            manifest_lines.append(
                f"setting {setting.label()}: t0 = {report.t0:.12g}, "
                f"truth = {report.truth.value:.12g} (se {report.truth.se:.3g})")
            for tag in estimators:
                m = report.metrics[tag]
                report_rows.append([beta, setting.p, setting.k, setting.s0,
                                    setting.s1, tag, m.bias, m.sd, m.ese,
                                    m.rel_mse, m.cr, m.power, m.n_failures])
                power_rows.append([tag, beta, setting.s0, setting.s1, m.power])
                relmse_rows.append([tag, beta, setting.s0, setting.s1, m.rel_mse])

    write_table(os.path.join(out_dir, "mc_report.csv"),
                ["beta", "p", "k", "s0", "s1", "estimator", "bias", "sd",
                 "ese", "relmse", "cr", "power", "n_failures"], report_rows)
    write_table(os.path.join(out_dir, "power_curve.csv"),
                ["estimator", "beta", "s0", "s1", "power"], power_rows)
    write_table(os.path.join(out_dir, "relmse_curve.csv"),
                ["estimator", "beta", "s0", "s1", "relmse"], relmse_rows)
    _write_manifest(os.path.join(out_dir, "run_manifest.txt"), opts, manifest_lines)
    return 0


def cmd_calibrate_t0(args) -> int:
    opts = merged_options(args, {"seed": 0})
    setting = _setting_from(opts)
    print("%.12g" % calibrate_t0(setting))
    return 0


def cmd_truth(args) -> int:
    opts = merged_options(args, {"seed": 0, "draws": 1_000_000})
    setting = _setting_from(opts)
    t = float(opts["t"]) if "t" in opts and opts["t"] is not None else calibrate_t0(setting)
    truth = true_ace(setting, t, n_draws=int(opts["draws"]))
    print("t = %.12g" % t)
    print("ace = %.12g" % truth.value)
    print("se = %.12g" % truth.se)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "estimate": cmd_estimate,
        "simulate": cmd_simulate,
        "calibrate-t0": cmd_calibrate_t0,
        "truth": cmd_truth,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
