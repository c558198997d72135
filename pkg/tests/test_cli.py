import csv
import json

import numpy as np
import pytest

from asentinel import cli
from asentinel.model import (
    LinearGaussianSystem,
    enumerate_modes,
    system_to_json,
    uniform_priors,
)


def write_system(path, *, noise=0.01, p=1, with_objective=False,
                 with_constraints=False):
    if p == 1:
        B = [[1.0]]
    else:
        B = [[1.0, 0.5]]
    system = LinearGaussianSystem(
        A=[[0.9]], B=B, C=[[1.0]], Hw=[[noise]], Hv=[[noise]],
        x0_mean=[0.0], x0_cov=[[noise]])
    modes = enumerate_modes(system.B, uniform_priors(p))
    doc = system_to_json(system, modes)
    if with_objective:
        doc["objective"] = {"Q": [[1.0]], "R": np.eye(p).tolist(),
                            "reference": [0.0] * 6}
    if with_constraints:
        doc["constraints"] = {"Gx": [[0.0]], "Gu": [[-1.0] * p][0:1],
                              "g": [0.0]}
    path.write_text(json.dumps(doc))
    return doc


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


class TestParseSeeds:
    def test_forms(self):
        assert cli.parse_seeds("5") == [5]
        assert cli.parse_seeds("1,2,9") == [1, 2, 9]
        assert cli.parse_seeds("0:3") == [0, 1, 2]
        with pytest.raises(cli.CliError):
            cli.parse_seeds("4:4")


class TestSimulate:
    def test_writes_rollouts(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path)
        rc = cli.main(["simulate", "--system", str(sys_path),
                       "--horizon", "4", "--seeds", "0:2",
                       "--output-dir", str(tmp_path / "out")])
        assert rc == 0
        rows = read_rows(tmp_path / "out" / "rollout_mode0_seed0.csv")
        assert len(rows) == 5
        assert set(rows[0]) == {"k", "x0", "y0"}

    def test_reruns_are_byte_identical(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path)
        for sub in ("a", "b"):
            cli.main(["simulate", "--system", str(sys_path), "--horizon",
                      "4", "--seeds", "3", "--output-dir",
                      str(tmp_path / sub)])
        a = (tmp_path / "a" / "rollout_mode0_seed3.csv").read_bytes()
        b = (tmp_path / "b" / "rollout_mode0_seed3.csv").read_bytes()
        assert a == b

    def test_bad_json_reports_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"system": ')
        rc = cli.main(["simulate", "--system", str(bad)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "line" in err and "column" in err


class TestOptimize:
    def test_pure_control_solution_json(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path, with_objective=True, with_constraints=True)
        out = tmp_path / "out"
        rc = cli.main(["optimize", "--system", str(sys_path),
                       "--horizon", "5", "--trace",
                       "--diagnostics", str(tmp_path / "diag.json"),
                       "--output-dir", str(out)])
        assert rc == 0
        result = json.loads((out / "solution.json").read_text())
        assert result["status"] == "optimal"
        assert len(result["u"]) == 5
        assert (out / "trace.csv").exists()
        diag = json.loads((tmp_path / "diag.json").read_text())
        assert "psi_variant_reading" in diag

    def test_infeasible_exits_nonzero(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        doc = write_system(sys_path)
        doc["constraints"] = {"Gx": [[0.0], [0.0]],
                              "Gu": [[1.0], [-1.0]], "g": [-1.0, 0.0]}
        sys_path.write_text(json.dumps(doc))
        rc = cli.main(["optimize", "--system", str(sys_path),
                       "--horizon", "3", "--output-dir",
                       str(tmp_path / "out")])
        assert rc == 3

    def test_detection_constrained(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path, noise=0.05)
        out = tmp_path / "out"
        rc = cli.main(["optimize", "--system", str(sys_path),
                       "--horizon", "4", "--formulation",
                       "detection-constrained", "--jd-max", "0.4",
                       "--restarts", "4", "--output-dir", str(out)])
        assert rc == 0
        result = json.loads((out / "solution.json").read_text())
        assert result["status"] in ("feasible", "max_iterations")
        assert result["side_constraint_slack"] >= -1e-6


class TestDetect:
    def test_attack_free_posterior_concentrates(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path, noise=1e-8)
        out = tmp_path / "out"
        rc = cli.main(["detect", "--system", str(sys_path), "--horizon", "4",
                       "--steps", "12", "--true-mode", "0",
                       "--output-dir", str(out)])
        assert rc == 0
        rows = read_rows(out / "detect_mode0_seed0.csv")
        assert set(rows[0]) == {"k", "detector_id", "mode_0", "mode_1",
                                "decision"}
        final = [r for r in rows if r["k"] == "11"]
        assert max(float(r["mode_0"]) for r in final) >= 0.99

    def test_decisions_once_warm(self, tmp_path):
        sys_path = tmp_path / "sys.json"
        write_system(sys_path, noise=0.01)
        out = tmp_path / "out"
        cli.main(["detect", "--system", str(sys_path), "--horizon", "3",
                  "--steps", "8", "--output-dir", str(out)])
        rows = read_rows(out / "detect_mode0_seed0.csv")
        decided_steps = sorted({int(r["k"]) for r in rows if r["decision"]})
        assert decided_steps == list(range(2, 8))


class TestClosedLoopCommand:
    def test_summary_normalization(self, tmp_path):
        out = tmp_path / "out"
        for formulation in ("pure-control", "detection-constrained"):
            rc = cli.main(["closed-loop", "--scenario",
                           "scenarios/haughton_9_10.json",
                           "--formulation", formulation,
                           "--seeds", "0", "--restarts", "2",
                           "--output-dir", str(out)])
            assert rc == 0
        steps = read_rows(out / "run_pure-control_seed0_steps.csv")
        assert len(steps) == 70
        assert set(steps[0]) >= {"k", "minute", "true_mode", "level9",
                                 "level10", "head8", "head9", "head10"}
        summary = read_rows(out / "summary.csv")
        rows = {(r["formulation"], r["seed"]): r for r in summary}
        base = rows[("pure-control", "0")]
        assert float(base["jc_normalized"]) == pytest.approx(1.0)
        capped = rows[("detection-constrained", "0")]
        assert float(capped["jd_normalized"]) < 1.0
        assert float(capped["jc_normalized"]) > 1.0

    def test_rerun_byte_identical(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            cli.main(["closed-loop", "--scenario",
                      "scenarios/haughton_9_10.json",
                      "--formulation", "pure-control", "--seeds", "1",
                      "--output-dir", str(out)])
            outs.append((out / "run_pure-control_seed1_steps.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_thread_pool_matches_sequential(self, tmp_path, monkeypatch):
        files = {}
        for sub, threads in (("seq", "1"), ("par", "3")):
            monkeypatch.setenv("ASENTINEL_THREADS", threads)
            out = tmp_path / sub
            cli.main(["closed-loop", "--scenario",
                      "scenarios/haughton_9_10.json",
                      "--formulation", "pure-control", "--seeds", "0:3",
                      "--output-dir", str(out)])
            files[sub] = (out / "costs_pure-control.csv").read_bytes()
        assert files["seq"] == files["par"]


class TestVerifyCommand:
    def test_quick_verify_passes(self, capsys):
        rc = cli.main(["verify", "--quick"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS" in out
        assert "FAIL" not in out
