"""CLI surfaces: cohort I/O, estimate/simulate artifacts, NA semantics,
byte-identical reruns."""

import numpy as np
import pytest

from survace.cli import main, parse_config_file
from survace.dataio import CohortFormatError, load_cohort, save_cohort, write_table
from survace.simulation import DgpSetting, gen_cohort
from survace.survival import Cohort


def write_cohort_csv(path, rows, header="time,event,arm,x1"):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


class TestLoadCohort:
    def test_minimal_two_row_file(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[1.0, 1, 1, 0.5], [2.0, 0, 0, -0.5]])
        cohort = load_cohort(path)
        assert cohort.n == 2 and cohort.p == 1
        assert cohort.y[0] == 1.0 and cohort.z[1] == 0

    def test_bad_event_names_row(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[1.0, 1, 1, 0.5], [2.0, 2, 0, 0.1]])
        with pytest.raises(CohortFormatError, match="row 2.*event"):
            load_cohort(path)

    def test_negative_time_names_row(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[-1.0, 1, 1, 0.5], [2.0, 0, 0, 0.1]])
        with pytest.raises(CohortFormatError, match="row 1.*time"):
            load_cohort(path)

    def test_non_numeric_cell_named(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[1.0, 1, 1, "oops"], [2.0, 0, 0, 0.1]])
        with pytest.raises(CohortFormatError, match="row 1.*x1"):
            load_cohort(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[1.0, 1, 0.5]], header="time,event,x1")
        with pytest.raises(CohortFormatError, match="arm"):
            load_cohort(path)

    def test_single_arm_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        write_cohort_csv(path, [[1.0, 1, 1, 0.5], [2.0, 0, 1, 0.1]])
        with pytest.raises(CohortFormatError, match="zero subjects"):
            load_cohort(path)

    def test_round_trip(self, tmp_path):
        cohort = gen_cohort(DgpSetting(n=25, p=3, k=3), np.random.default_rng(0))
        path = tmp_path / "c.csv"
        save_cohort(cohort, path)
        back = load_cohort(path)
        np.testing.assert_allclose(back.y, cohort.y, rtol=0, atol=0)
        assert np.array_equal(back.delta, cohort.delta)
        assert np.array_equal(back.z, cohort.z)
        np.testing.assert_allclose(back.x, cohort.x, rtol=0, atol=0)


class TestConfigFile:
    def test_parse_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nbackend = cox\nseed = 42\n", encoding="utf-8")
        opts = parse_config_file(cfg)
        assert opts == {"backend": "cox", "seed": "42"}


def _toy_data(tmp_path, n=40, p=2, seed=0):
    cohort = gen_cohort(DgpSetting(n=n, p=p, k=p, beta=0.5, s0=0.5, s1=0.5),
                        np.random.default_rng(seed))
    path = tmp_path / "cohort.csv"
    save_cohort(cohort, path)
    return path


class TestEstimateCommand:
    def test_tau0_only_no_censoring_matches_survival_difference(self, tmp_path):
        y = [1, 2, 3, 4, 5, 6]
        delta = [1] * 6
        z = [1, 1, 1, 0, 0, 0]
        cohort = Cohort(y, delta, z, np.zeros((6, 1)))
        data = tmp_path / "d.csv"
        save_cohort(cohort, data)
        out = tmp_path / "out"
        rc = main(["estimate", "--data", str(data), "--estimators", "tau0",
                   "--grid", "t0=3.5,points=4", "--out", str(out)])
        assert rc == 0
        lines = (out / "ace_curves.csv").read_text().strip().split("\n")
        assert lines[0] == "estimator,t,estimate,se,lo,hi"
        for line in lines[1:]:
            tag, t, est = line.split(",")[:3]
            t = float(t)
            want = np.mean(np.array(y[:3]) > t) - np.mean(np.array(y[3:]) > t)
            assert float(est) == pytest.approx(want, abs=1e-10)

    def test_artifacts_exist_and_rerun_identical(self, tmp_path):
        data = _toy_data(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        argv = ["estimate", "--data", str(data), "--backend", "srf",
                "--trees", "40", "--grid", "t0=0.8,points=5", "--seed", "3"]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        for name in ("ace_curves.csv", "summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_cox_failure_emits_na_rows_and_exit_zero(self, tmp_path):
        # p > n forces a singular information matrix: tau1..tau3 become NA
        rng = np.random.default_rng(1)
        n, p = 12, 20
        x = rng.normal(size=(n, p))
        y = rng.exponential(size=n)
        cohort = Cohort(y, np.ones(n, dtype=int), np.arange(n) % 2, x)
        data = tmp_path / "wide.csv"
        save_cohort(cohort, data)
        out = tmp_path / "out"
        rc = main(["estimate", "--data", str(data), "--backend", "cox",
                   "--grid", "t0=0.6,points=3", "--out", str(out)])
        assert rc == 0
        text = (out / "ace_curves.csv").read_text()
        assert "tau3" in text and "NA,NA,NA" in text
        tau0_lines = [l for l in text.splitlines() if l.startswith("tau0")]
        assert all("NA" not in l for l in tau0_lines)
        manifest = (out / "run_manifest.txt").read_text()
        assert "soft_failures = 1" in manifest

    def test_bootstrap_bands(self, tmp_path):
        data = _toy_data(tmp_path, n=30)
        out = tmp_path / "out"
        rc = main(["estimate", "--data", str(data), "--estimators", "tau0",
                   "--bootstrap", "25", "--grid", "t0=0.7,points=3",
                   "--out", str(out), "--seed", "5"])
        assert rc == 0
        lines = (out / "ace_curves.csv").read_text().strip().split("\n")[1:]
        for line in lines:
            cells = line.split(",")
            est, lo, hi = float(cells[2]), float(cells[4]), float(cells[5])
            assert lo <= est <= hi

    def test_explicit_times_grid(self, tmp_path):
        data = _toy_data(tmp_path)
        out = tmp_path / "out"
        rc = main(["estimate", "--data", str(data), "--estimators", "tau0",
                   "--grid", "times=0.2;0.5;0.9", "--out", str(out)])
        assert rc == 0
        lines = (out / "ace_curves.csv").read_text().strip().split("\n")[1:]
        assert [float(l.split(",")[1]) for l in lines] == [0.2, 0.5, 0.9]


class TestSimulateCommand:
    def test_smoke_and_schema(self, tmp_path):
        out = tmp_path / "sim"
        rc = main(["simulate", "--reps", "2", "--n", "40", "--p", "3", "--k", "3",
                   "--beta", "0.5", "--s", "0.5", "--trees", "20",
                   "--boot-tau1", "5", "--out", str(out), "--seed", "1"])
        assert rc == 0
        report = (out / "mc_report.csv").read_text().strip().split("\n")
        assert report[0] == "beta,p,k,s0,s1,estimator,bias,sd,ese,relmse,cr,power,n_failures"
        assert len(report) == 1 + 4
        assert (out / "power_curve.csv").exists()
        assert (out / "relmse_curve.csv").exists()
        assert (out / "run_manifest.txt").exists()

    def test_rerun_byte_identical(self, tmp_path):
        argv = ["simulate", "--reps", "2", "--n", "40", "--p", "3", "--k", "3",
                "--beta", "0,0.5", "--s", "0.3", "--trees", "15",
                "--boot-tau1", "4", "--seed", "7"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        for name in ("mc_report.csv", "power_curve.csv", "relmse_curve.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_env_var_overrides_out(self, tmp_path, monkeypatch):
        target = tmp_path / "env-out"
        monkeypatch.setenv("SURVACE_OUT", str(target))
        rc = main(["simulate", "--reps", "2", "--n", "40", "--p", "2", "--k", "2",
                   "--beta", "0", "--s", "0", "--trees", "10", "--boot-tau1", "0",
                   "--estimators", "tau0", "--out", "ignored"])
        assert rc == 0
        assert (target / "mc_report.csv").exists()


class TestAuditCommands:
    def test_calibrate_t0_prints_value(self, capsys):
        rc = main(["calibrate-t0", "--beta", "0", "--s0", "0", "--s1", "0"])
        assert rc == 0
        value = float(capsys.readouterr().out.strip())
        assert value == pytest.approx(0.480, abs=0.02)

    def test_truth_prints_triplet(self, capsys):
        rc = main(["truth", "--beta", "0.7", "--s0", "0", "--s1", "0",
                   "--t", "0.5", "--draws", "200000"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = dict(l.split(" = ") for l in out.strip().split("\n"))
        want = np.exp(-0.5 * np.exp(0.7)) - np.exp(-0.5)
        assert float(lines["ace"]) == pytest.approx(want, abs=0.005)


class TestWriteTable:
    def test_na_and_float_formatting(self, tmp_path):
        path = tmp_path / "t.csv"
        write_table(path, ["a", "b"], [[float("nan"), 0.1], [None, 2]])
        assert path.read_text() == "a,b\nNA,0.1\nNA,2\n"
