import json
import subprocess
import sys

import numpy as np
import pytest

from spreadrisk import cli
from spreadrisk.resources import AllocationSchedule
from spreadrisk.scenarios import build_epidemic7

EPI = ["--preset", "epidemic7"]


@pytest.fixture(scope="module")
def planned(tmp_path_factory):
    out = tmp_path_factory.mktemp("plan")
    assert cli.main(["plan", *EPI, "--out", str(out)]) == 0
    return out


def test_plan_artifacts(planned):
    for name in ("schedule.json", "schedule.csv", "certificate.json", "risk.csv", "allocation.csv",
                 "allocation.svg", "summary.json"):
        assert (planned / name).stat().st_size > 0, name
    summary = json.loads((planned / "summary.json").read_text())
    assert summary["status"] == "optimal"
    assert max(summary["budget_per_stage"]) <= 1.5 + 1e-6


def test_schedule_round_trip_is_bit_identical(planned, tmp_path):
    net = build_epidemic7()
    s = AllocationSchedule.load(planned / "schedule.json", net)
    s.save(tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == (planned / "schedule.json").read_bytes()
    back = AllocationSchedule.load(tmp_path / "again.json", net)
    assert back.u.tobytes() == s.u.tobytes() and back.v.tobytes() == s.v.tobytes()


def test_verify_accepts_and_rejects(planned, tmp_path, capsys):
    assert cli.main(["verify", *EPI, "--certificate", str(planned / "certificate.json"),
                     "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True
    doc = json.loads((planned / "certificate.json").read_text())
    doc["p"][1][5] *= 0.9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert cli.main(["verify", *EPI, "--certificate", str(bad), "--out", str(tmp_path)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is False and report["violation"] == {"stage": 2, "node": 6}


def test_simulate_planned_beats_zero(planned, tmp_path, capsys):
    code = cli.main(["simulate", *EPI, "--schedule", str(planned / "schedule.json"), "--compare-zero",
                     "--replications", "2000", "--out", str(tmp_path)])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["pass"] is True and doc["planned_not_worse"] is True
    # the zero schedule leaves the epidemic unstable: there is no bound to check against
    assert doc["zero_schedule"]["certified_bound"] is None
    assert json.loads((tmp_path / "simulate.json").read_text())["mean"] == doc["mean"]


def test_minimize_resources_and_sparsify(tmp_path, capsys):
    assert cli.main(["minimize-resources", *EPI, "--gamma", "10", "--out", str(tmp_path / "a")]) == 0
    capsys.readouterr()
    assert cli.main(["sparsify", *EPI, "--gamma", "10", "--out", str(tmp_path / "b"), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("q,objective,nonzeros_u,nonzeros_v,max_risk")
    assert (tmp_path / "b" / "iterations.svg").exists()


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert cli.main(["plan", *EPI, "--gamma-stage", "0", "--out", out]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "infeasible"
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 2
    assert cli.main(["plan", "--preset", "nope", "--out", out]) == 4
    assert cli.main(["plan", *EPI, "--alpha", "1.5", "--out", out]) == 4
    assert cli.main(["simulate", *EPI, "--out", out]) == 4
    assert cli.main(["plan", *EPI, "--max-iters", "2", "--out", out]) == 3


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "epidemic7", "K": 2, "gamma_stage": [1.0, 2.0], "out": str(tmp_path)}))
    assert cli.main(["plan", "--config", str(cfg), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("node,p1,x_hat,risk")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["K"] == 2 and summary["budget_per_stage"][0] <= 1.0 + 1e-6
    cfg.write_text(json.dumps({"preset": "epidemic7", "colour": "red"}))
    assert cli.main(["plan", "--config", str(cfg), "--out", str(tmp_path)]) == 4
    assert "unknown config keys: colour" in capsys.readouterr().err


def test_network_file_validate_and_dump(tmp_path, capsys):
    net = build_epidemic7()
    net.save(tmp_path / "net.json")
    base = ["--network", str(tmp_path / "net.json"), "-K", "2", "--h", "0.24", "--alpha", "0.93",
            "--gamma-stage", "1.5", "--out", str(tmp_path)]
    assert cli.main(["validate", *base]) == 0
    assert json.loads(capsys.readouterr().out) == {"valid": True, "violations": []}
    assert cli.main(["validate", *base, "--h", "5"]) == 4
    capsys.readouterr()
    assert cli.main(["dump", *base]) == 0
    text = capsys.readouterr().out
    assert text.startswith("spreadrisk-cone-program 1") and (tmp_path / "p1.dump").read_text() == text
    assert cli.main(["dump", *base, "--program", "P2"]) == 4


def test_wildfire_plan_map_and_bench(tmp_path, capsys):
    out = tmp_path / "wf"
    assert cli.main(["plan", "--preset", "wildfire-small", "-K", "2", "--outbreak", "point", "--out", str(out)]) == 0
    assert (out / "allocation_map.svg").stat().st_size > 1000
    capsys.readouterr()
    assert cli.main(["bench", "--k-range", "1..3", "--out", str(tmp_path / "b")]) == 0
    doc = json.loads((tmp_path / "b" / "bench.json").read_text())
    assert doc["K"] == [1, 2, 3] and 0 <= doc["r2"] <= 1
    assert (tmp_path / "b" / "bench.svg").exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "spreadrisk", "validate", *EPI, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["valid"] is True
