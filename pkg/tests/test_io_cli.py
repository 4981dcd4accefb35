import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cpca import cli
from cpca.errors import ValidationError
from cpca.io import (
    atomic_write,
    load_caps_long_csv,
    load_constraints_csv,
    load_points_csv,
    load_samples_long_csv,
    read_table,
    write_matrix,
)


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoaders:
    def test_points_and_constraints(self, tmp_path):
        p = write(tmp_path / "p.csv", "0.1,0.2\n0.3,0.4\n0.5,0.6\n")
        c = write(tmp_path / "c.csv", "1,0,0\n0,1,0\n")
        x = load_points_csv(p)
        X = load_constraints_csv(c, x.shape[1])
        assert x.shape == (3, 2) and (X.m, X.d) == (2, 2)

    def test_header_and_comments(self, tmp_path):
        p = write(tmp_path / "p.csv", "# a comment\n\nx,y\n1,2\n# mid\n3,4\n")
        arr, header = read_table(p)
        assert header == ["x", "y"]
        np.testing.assert_array_equal(arr, [[1, 2], [3, 4]])

    def test_ragged(self, tmp_path):
        p = write(tmp_path / "p.csv", "1,2\n3\n")
        with pytest.raises(ValidationError, match=r"p\.csv:2"):
            load_points_csv(p)

    def test_non_numeric(self, tmp_path):
        p = write(tmp_path / "p.csv", "1,2\n3,abc\n")
        with pytest.raises(ValidationError, match="line|:2"):
            load_points_csv(p)

    def test_constraint_width(self, tmp_path):
        c = write(tmp_path / "c.csv", "1,0\n")
        with pytest.raises(ValidationError, match="expected 3 columns"):
            load_constraints_csv(c, 2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="cannot read"):
            load_points_csv(tmp_path / "nope.csv")

    def test_samples_long(self, tmp_path):
        s = write(tmp_path / "s.csv", "group_id,value\na,1\nb,4\na,2\nb,5\na,3\nb,6\n")
        ids, samples = load_samples_long_csv(s)
        assert ids == ["a", "b"]
        np.testing.assert_array_equal(samples[0], [1, 2, 3])
        np.testing.assert_array_equal(samples[1], [4, 5, 6])

    def test_samples_missing_value(self, tmp_path):
        s = write(tmp_path / "s.csv", "group_id,value\na,1\nb\n")
        with pytest.raises(ValidationError, match=":3"):
            load_samples_long_csv(s)

    def test_caps_long(self, tmp_path):
        s = write(tmp_path / "c.csv", "date,asset,cap\nd1,A,2\nd1,B,1\nd2,B,3\nd2,A,1\n")
        dates, assets, caps = load_caps_long_csv(s)
        assert dates == ["d1", "d2"] and assets == ["A", "B"]
        np.testing.assert_array_equal(caps, [[2, 1], [1, 3]])

    def test_caps_missing_pair(self, tmp_path):
        s = write(tmp_path / "c.csv", "d1,A,2\nd1,B,1\nd2,A,1\n")
        with pytest.raises(ValidationError, match="no cap"):
            load_caps_long_csv(s)

    def test_float_round_trip(self, tmp_path, rng):
        x = rng.standard_normal((20, 3)) * 10.0 ** rng.integers(-300, 300, (20, 3))
        write_matrix(tmp_path / "m.csv", x, comments=["test"])
        np.testing.assert_array_equal(load_points_csv(tmp_path / "m.csv"), x)

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write(tmp_path / "a.txt", "hello")
        assert os.listdir(tmp_path) == ["a.txt"]


@pytest.fixture
def fit_inputs(tmp_path, rng):
    x = rng.uniform(0, 1, (60, 3))
    np.savetxt(tmp_path / "p.csv", x, delimiter=",")
    np.savetxt(tmp_path / "c.csv", np.hstack([np.eye(3), np.zeros((3, 1))]), delimiter=",")
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestCli:
    def test_fit_outputs(self, fit_inputs):
        d = fit_inputs
        assert run("fit", "--points", d / "p.csv", "--constraints", d / "c.csv", "--k", 2,
                   "--out", d / "out") == 0
        for name in ("components.csv", "projections.csv", "ev.csv", "report.json",
                     "reference.csv"):
            assert (d / "out" / name).exists()
        report = json.loads((d / "out" / "report.json").read_text())
        assert set(report) >= {"config", "components", "timings", "version"}
        assert report["config"]["k"] == 2
        assert [c["index"] for c in report["components"]] == [1, 2]
        assert load_points_csv(d / "out" / "components.csv").shape == (2, 3)
        assert load_points_csv(d / "out" / "projections.csv").shape == (60, 2)

    def test_project_round_trip(self, fit_inputs):
        d = fit_inputs
        run("fit", "--points", d / "p.csv", "--constraints", d / "c.csv", "--k", 2,
            "--out", d / "f")
        assert run("project", "--components", d / "f" / "components.csv",
                   "--reference", d / "f" / "reference.csv", "--points", d / "p.csv",
                   "--constraints", d / "c.csv", "--out", d / "pr") == 0
        assert (d / "f" / "projections.csv").read_bytes() == \
            (d / "pr" / "projections.csv").read_bytes()

    def test_infeasible_point_exit_1(self, fit_inputs, caplog):
        d = fit_inputs
        x = np.loadtxt(d / "p.csv", delimiter=",")
        x[4, 1] = -1e-3
        np.savetxt(d / "bad.csv", x, delimiter=",")
        assert run("fit", "--points", d / "bad.csv", "--constraints", d / "c.csv",
                   "--out", d / "o") == 1
        assert "[4]" in caplog.text

    def test_nonconvergence_exit_2(self, fit_inputs):
        d = fit_inputs
        code = run("fit", "--points", d / "p.csv", "--constraints", d / "c.csv", "--k", 2,
                   "--max-iter", 1, "--no-polish", "--grad-tol", 1e-300, "--obj-tol", 1e-300,
                   "--out", d / "o")
        assert code == 2
        report = json.loads((d / "o" / "report.json").read_text())
        assert not all(c["converged"] for c in report["components"])

    def test_wgpca_curves_shape(self, tmp_path, rng):
        rows = ["group_id,value"]
        for g in range(8):
            rows += [f"g{g},{float(v)!r}" for v in rng.normal(g * 0.1, 1 + 0.1 * g, 300)]
        (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")
        assert run("wgpca", "--samples", tmp_path / "s.csv", "--grid-n", 7, "--k", 2,
                   "--steps", 5, "--out", tmp_path / "w") == 0
        curves, header = read_table(tmp_path / "w" / "curves.csv")
        assert header == ["component", "t", "cell", "value"]
        assert curves.shape == (2 * 5 * 2 ** 7, 4)
        assert load_points_csv(tmp_path / "w" / "components.csv").shape == (2, 128)

    def test_simulate_then_aitchison(self, tmp_path):
        assert run("simulate-atlas", "--seed", 42, "--n-stocks", 8, "--n-days", 60,
                   "--out", tmp_path / "sim") == 0
        assert run("aitchison", "--caps", tmp_path / "sim" / "caps.csv", "--k", 2,
                   "--out", tmp_path / "a") == 0
        assert load_points_csv(tmp_path / "a" / "components.csv").shape == (2, 7)
        div, header = read_table(tmp_path / "a" / "diversity.csv")
        assert div.shape == (60, 2)

    def test_threads_env(self, fit_inputs, monkeypatch):
        d = fit_inputs
        monkeypatch.setenv("CPCA_THREADS", "zero")
        assert run("fit", "--points", d / "p.csv", "--out", d / "o") == 1
        monkeypatch.setenv("CPCA_THREADS", "3")
        assert run("fit", "--points", d / "p.csv", "--out", d / "o") == 0
        assert json.loads((d / "o" / "report.json").read_text())["config"]["threads"] is None

    def test_bad_arguments(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run("fit", "--out", tmp_path)
        assert err.value.code == 2

    def test_console_entry_point(self, fit_inputs):
        d = fit_inputs
        proc = subprocess.run([sys.executable, "-m", "cpca.cli", "fit", "--points",
                               str(d / "p.csv"), "--out", str(d / "o")],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout == ""
