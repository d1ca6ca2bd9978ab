import json
import os
import subprocess
import sys

import numpy as np
import pytest

from omegaflow.cli import ConfigError, emit_plot_table, main, run
from omegaflow.jko import FlowTrajectory, JkoConfig, flow
from omegaflow.verify import RateStudy, dirac_state, quadratic_energy


def write_config(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


FLOW_CONFIG = {
    "job": "flow",
    "energy": {"potential": "quadratic"},
    "initial": {"kind": "dirac", "a": 1.0, "n": 4},
    "jko": {"tau": 0.1, "steps": 5, "inner_tol": 1e-10},
    "seed": 7,
}


class TestRun:
    def test_flow_job(self, tmp_path):
        cfg = dict(FLOW_CONFIG)
        cfg["output"] = {"trajectory": str(tmp_path / "t.csv"),
                         "manifest": str(tmp_path / "m.json")}
        code = run(write_config(tmp_path, "c.json", cfg))
        assert code == 0
        rows = (tmp_path / "t.csv").read_text().splitlines()
        assert rows[0].split(",") == ["step", "time", "energy", "W2_step",
                                      "constraint_violation", "inner_iters"]
        assert len(rows) == 1 + 6  # header + steps+1 states
        manifest = json.loads((tmp_path / "m.json").read_text())
        assert manifest["tool"].startswith("omegaflow")
        assert "config_sha256" in manifest

    def test_missing_key_exit_2(self, tmp_path, capsys):
        code = run(write_config(tmp_path, "c.json", {"job": "flow"}))
        assert code == 2
        err = capsys.readouterr().err
        assert "energy" in err

    def test_bad_json_exit_2(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert run(str(p)) == 2

    def test_unknown_job_exit_2(self, tmp_path, capsys):
        code = run(write_config(tmp_path, "c.json", {"job": "everything"}))
        assert code == 2
        assert "job" in capsys.readouterr().err

    def test_unknown_jko_key_pointer(self, tmp_path, capsys):
        cfg = dict(FLOW_CONFIG)
        cfg["jko"] = {"tau": 0.1, "stepz": 3}
        code = run(write_config(tmp_path, "c.json", cfg))
        assert code == 2
        assert "stepz" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        cfg = dict(FLOW_CONFIG)
        cfg["output"] = {"trajectory": str(tmp_path / "a.csv")}
        path = write_config(tmp_path, "c.json", cfg)
        assert run(path) == 0
        body1 = (tmp_path / "a.csv").read_bytes()
        assert run(path) == 0
        body2 = (tmp_path / "a.csv").read_bytes()
        assert body1 == body2

    def test_rates_job(self, tmp_path):
        cfg = {
            "job": "rates",
            "energy": {"potential": "quadratic"},
            "initial": {"kind": "dirac", "a": 1.0, "n": 2},
            "modulus": {"kind": "lipschitz", "lambda": 1.0},
            "jko": {"inner_tol": 1e-9},
            "t": 0.5,
            "n_list": [8, 16, 32],
            "n_ref": 128,
            "output": {"plot_table": str(tmp_path / "r.csv"),
                       "report": str(tmp_path / "r.json"),
                       "manifest": str(tmp_path / "m.json")},
        }
        assert run(write_config(tmp_path, "c.json", cfg)) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["monotone"] and report["below_envelope"]
        table = (tmp_path / "r.csv").read_text().splitlines()
        assert table[0] == "series,x,y"
        assert any(line.startswith("measured,") for line in table[1:])

    def test_verify_job(self, tmp_path):
        cfg = {"job": "verify", "suite": "transport", "quick": True,
               "output": {"report": str(tmp_path / "rep.json"),
                          "manifest": str(tmp_path / "m.json")}}
        assert run(write_config(tmp_path, "c.json", cfg)) == 0
        reports = json.loads((tmp_path / "rep.json").read_text())
        assert isinstance(reports, list) and reports
        assert all(r["pass"] for r in reports)


class TestEmitPlotTable:
    def test_empty_rate_study_header_only(self):
        st = RateStudy("empty", 0.5, [], [], "n^-1/4", [], 0.0, 0.0, 1.0)
        assert emit_plot_table(st) == "series,x,y\n"

    def test_rate_study_series(self):
        st = RateStudy("f", 0.5, [8, 16], [0.1, 0.05], "n^-1/4",
                       [0.59, 0.5], 0.169, -1.0, 2.0)
        lines = emit_plot_table(st).splitlines()
        assert lines[0] == "series,x,y"
        assert sum(1 for l in lines if l.startswith("measured,")) == 2
        assert sum(1 for l in lines if l.startswith("bound,")) == 2

    def test_trajectory_series(self):
        tr = flow(quadratic_energy(), dirac_state(1.0, 2),
                  JkoConfig(tau=0.1, steps=3, inner_tol=1e-10))
        lines = emit_plot_table(tr).splitlines()
        assert sum(1 for l in lines if l.startswith("energy,")) == 4
        assert sum(1 for l in lines if l.startswith("W2_step,")) == 3


class TestMainEntry:
    def test_verify_subcommand(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main(["verify", "--suite", "transport", "--quick",
                     "--report", "rep.json"])
        assert code == 0
        assert (tmp_path / "rep.json").exists()

    def test_transport_subcommand(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["transport", "--quick", "--report", "t.json"]) == 0

    def test_flow_subcommand(self, tmp_path):
        cfg = dict(FLOW_CONFIG)
        cfg["output"] = {"trajectory": str(tmp_path / "t.csv"),
                         "manifest": str(tmp_path / "m.json")}
        path = write_config(tmp_path, "c.json", cfg)
        assert main(["flow", path]) == 0

    def test_console_script_help(self):
        out = subprocess.run([sys.executable, "-m", "omegaflow.cli", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "verify" in out.stdout


class TestFixtureOverride:
    def test_env_var_override(self, tmp_path, monkeypatch):
        from omegaflow.verify import fixtures_dir, load_frozen
        src = load_frozen()
        alt = tmp_path / "fixtures"
        alt.mkdir()
        src["aggregation_cap2"]["C"] = 123.0
        (alt / "calibration.json").write_text(json.dumps(src))
        monkeypatch.setenv("OMEGAFLOW_FIXTURES", str(alt))
        assert fixtures_dir() == str(alt)
        assert load_frozen()["aggregation_cap2"]["C"] == 123.0
