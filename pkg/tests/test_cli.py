import json

import numpy as np
import pytest

from gldof.cli import main
from gldof.core import BlockPartition, Design
from gldof.datagen import save_problem
from gldof.risk import CSV_HEADER


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "prob.json"
    code = main(["gen", "--q", "20", "--block-sizes", "2,2,2,2,2",
                 "--k-active", "2", "--sigma", "0.5", "--seed", "42",
                 "--lambda", "0.4", "--out", str(path), "--no-timestamp"])
    assert code == 0
    return path


class TestGen:
    def test_problem_file_schema(self, problem_file):
        d = json.loads(problem_file.read_text())
        assert d["Q"] == 20 and d["N"] == 10
        assert len(d["partition"]) == 5
        assert len(d["X"]) == 20 and len(d["X"][0]) == 10
        assert len(d["y"]) == 20
        assert d["lambda"] == 0.4
        assert d["sigma"] == 0.5
        assert len(d["beta0"]) == 10
        assert d["manifest"]["command"] == "gldof gen"
        assert d["manifest"]["version"]

    def test_byte_identical_reruns(self, tmp_path):
        args = ["gen", "--q", "12", "--block-sizes", "3,3", "--k-active", "1",
                "--seed", "7", "--no-timestamp"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_timestamp_present_by_default(self, tmp_path):
        out = tmp_path / "t.json"
        assert main(["gen", "--q", "12", "--block-sizes", "3,3",
                     "--k-active", "1", "--out", str(out)]) == 0
        assert "timestamp" in json.loads(out.read_text())["manifest"]

    def test_env_seed_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GLDOF_SEED", "99")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["gen", "--q", "12", "--block-sizes", "3,3", "--k-active", "1",
              "--out", str(a), "--no-timestamp"])
        main(["gen", "--q", "12", "--block-sizes", "3,3", "--k-active", "1",
              "--seed", "99", "--out", str(b), "--no-timestamp"])
        assert a.read_bytes() == b.read_bytes()


class TestSolve:
    def test_solution_json(self, problem_file, tmp_path):
        out = tmp_path / "sol.json"
        code = main(["solve", "--problem", str(problem_file),
                     "--out", str(out), "--no-timestamp"])
        assert code == 0
        d = json.loads(out.read_text())
        assert d["kkt_residual"] <= 1e-8
        assert len(d["beta"]) == 10
        assert d["lambda"] == 0.4
        assert str(problem_file) in d["manifest"]["input_digests"]

    def test_lambda_override(self, problem_file, tmp_path):
        out = tmp_path / "sol.json"
        assert main(["solve", "--problem", str(problem_file), "--lambda", "5.0",
                     "--out", str(out), "--no-timestamp"]) == 0
        d = json.loads(out.read_text())
        assert d["lambda"] == 5.0

    def test_warm_start_round_trip(self, problem_file, tmp_path):
        first = tmp_path / "sol1.json"
        main(["solve", "--problem", str(problem_file), "--out", str(first),
              "--no-timestamp"])
        second = tmp_path / "sol2.json"
        code = main(["solve", "--problem", str(problem_file),
                     "--warm-start", str(first), "--out", str(second),
                     "--no-timestamp"])
        assert code == 0
        assert json.loads(second.read_text())["iterations"] == 0

    def test_csv_inputs(self, tmp_path):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((10, 4))
        y = rng.standard_normal(10)
        xp, yp = tmp_path / "x.csv", tmp_path / "y.csv"
        np.savetxt(xp, x, delimiter=",")
        np.savetxt(yp, y, delimiter=",")
        out = tmp_path / "sol.json"
        code = main(["solve", "--x-csv", str(xp), "--y-csv", str(yp),
                     "--partition", "[[0,1],[2,3]]", "--lambda", "0.5",
                     "--out", str(out), "--no-timestamp"])
        assert code == 0
        assert len(json.loads(out.read_text())["beta"]) == 4

    def test_missing_inputs_is_usage_error(self):
        assert main(["solve", "--lambda", "1.0"]) == 2

    def test_missing_lambda_is_usage_error(self, tmp_path):
        path = tmp_path / "nolam.json"
        main(["gen", "--q", "12", "--block-sizes", "3,3", "--k-active", "1",
              "--out", str(path), "--no-timestamp"])
        assert main(["solve", "--problem", str(path)]) == 2

    def test_budget_exhaustion_is_numerical_failure(self, problem_file):
        assert main(["solve", "--problem", str(problem_file),
                     "--lambda", "0.01", "--max-iter", "2"]) == 3


class TestDof:
    def test_report_json(self, problem_file, tmp_path):
        out = tmp_path / "dof.json"
        assert main(["dof", "--problem", str(problem_file), "--out", str(out),
                     "--no-timestamp"]) == 0
        d = json.loads(out.read_text())
        for key in ("divergence", "active_blocks", "active_dim",
                    "transition_margin", "support_margin",
                    "condition_estimate", "warning"):
            assert key in d


class TestPath:
    def test_csv_and_manifest_sidecar(self, problem_file, tmp_path):
        out = tmp_path / "curve.csv"
        code = main(["path", "--problem", str(problem_file),
                     "--grid-points", "8", "--out", str(out), "--no-timestamp"])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 9
        sidecar = json.loads((tmp_path / "curve.csv.manifest.json").read_text())
        assert sidecar["manifest"]["command"] == "gldof path"
        assert sidecar["sigma"] == 0.5  # picked up from the problem file

    def test_explicit_grid_and_jobs(self, problem_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["path", "--problem", str(problem_file),
                "--grid", "1.0,0.5,0.25", "--no-timestamp"]
        assert main(base + ["--out", str(a)]) == 0
        assert main(base + ["--out", str(b), "--jobs", "3"]) == 0
        rows_a = a.read_text().strip().split("\n")[1:]
        rows_b = b.read_text().strip().split("\n")[1:]
        for ra, rb in zip(rows_a, rows_b):
            va = [float(c) for c in ra.split(",")[:7]]
            vb = [float(c) for c in rb.split(",")[:7]]
            assert va == pytest.approx(vb, abs=1e-6)


class TestValidateFd:
    def test_pass_verdict(self, problem_file, tmp_path):
        out = tmp_path / "fd.json"
        code = main(["validate", "fd", "--problem", str(problem_file),
                     "--out", str(out), "--no-timestamp"])
        assert code == 0
        assert json.loads(out.read_text())["passed"] is True

    def test_oversized_step_fails_validation(self, tmp_path):
        # support stays fixed, but the truncation error exceeds the tolerance
        path = tmp_path / "p.json"
        y = np.array([3.0, 4.0, 0.3, 0.1])
        save_problem(path, Design.identity(4), y,
                     BlockPartition(((0, 1), (2, 3))), lam=1.0)
        assert main(["validate", "fd", "--problem", str(path),
                     "--step", "0.3", "--no-timestamp"]) == 4


class TestValidateMc:
    def test_pass_verdict_and_json(self, tmp_path):
        out = tmp_path / "mc.json"
        code = main(["validate", "mc", "--q", "20", "--block-sizes", "2,2,2,2,2",
                     "--k-active", "2", "--sigma", "0.5", "--seed", "42",
                     "--replicates", "150", "--mc-seed", "7",
                     "--out", str(out), "--no-timestamp"])
        assert code == 0
        d = json.loads(out.read_text())
        assert d["consistent_3sigma"] is True
        assert d["replicates"] == 150

    def test_spec_file_input(self, tmp_path):
        spec_path = tmp_path / "scen.json"
        spec_path.write_text(json.dumps({
            "Q": 20, "N": 10, "block_sizes": [2, 2, 2, 2, 2],
            "k_active": 2, "sigma": 0.5, "seed": 42}))
        assert main(["validate", "mc", "--spec", str(spec_path),
                     "--replicates", "100", "--mc-seed", "1",
                     "--no-timestamp"]) == 0


class TestVersionFlag:
    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
