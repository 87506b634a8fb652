"""Tests for the oqnet command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oqnet import cli
from oqnet.model import NetworkModel


def run_cli(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_analyze_builtin(capsys):
    rc, out, err = run_cli(capsys, "analyze",
                           "--spec", "builtin:three_station_d1")
    assert rc == 0
    assert "sojourn" in out
    assert "time in network entering at station 0" in out


def test_analyze_json_fields(capsys):
    rc, out, _ = run_cli(capsys, "analyze", "--eliminate",
                         "--spec", "builtin:three_station_d1", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert len(doc["stations"]) == 3
    assert doc["stations"][1]["eliminated"] is True
    assert doc["stations"][0]["eliminated"] is False
    total = doc["totals"]["by_entry_station"]["0"]
    assert 40 < total < 80


def test_dump_spec_round_trip(capsys):
    rc, out, _ = run_cli(capsys, "analyze", "--dump-spec",
                         "--spec", "builtin:ten_station")
    assert rc == 0
    net = NetworkModel.from_dict(json.loads(out))
    assert net.K == 10
    assert_allclose(net.external_rates().sum(), 1.0)


def test_spec_file_input(tmp_path, capsys):
    spec = {
        "stations": [
            {"service": {"rate": 1.0, "scv": 1.0},
             "arrival": {"rate": 0.5}},
        ],
        "routing": [[0.0]],
    }
    path = tmp_path / "mm1.json"
    path.write_text(json.dumps(spec))
    rc, out, _ = run_cli(capsys, "analyze", "--spec", str(path))
    assert rc == 0
    # M/M/1 at rho 0.5: wait 1, sojourn 2
    assert "1.0000" in out and "2.0000" in out


def test_simulate_json(capsys):
    rc, out, _ = run_cli(capsys, "simulate",
                         "--spec", "builtin:three_station_d1",
                         "--events", "60000", "--replications", "2",
                         "--seed", "5", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["replications"] == 2
    assert_allclose(doc["throughput"], [0.675, 0.9, 0.45], rtol=0.1)
    assert len(doc["sojourn_ci"]) == 3
    assert doc["total_sojourn"][1] is None      # NaN: not an entry station


def test_compare_reports_relative_errors(capsys):
    rc, out, _ = run_cli(capsys, "compare", "--eliminate",
                         "--spec", "builtin:three_station_d1",
                         "--events", "60000", "--replications", "2",
                         "--seed", "5")
    assert rc == 0
    assert "rel err" in out
    assert "total:0" in out
    assert "eliminated" in out


def test_idc_erlang2_csv(capsys):
    rc, out, _ = run_cli(capsys, "idc", "--dist", "erlang2", "--rate", "1")
    assert rc == 0
    lines = out.strip().splitlines()
    assert lines[0] == "t,idc"
    first = float(lines[1].split(",")[1])
    last = float(lines[-1].split(",")[1])
    assert abs(first - 1.0) < 1e-2          # every stream starts Poisson-like
    assert abs(last - 0.5) < 1e-5           # Erlang-2 limit is its scv


def test_idc_poisson_is_flat(capsys):
    rc, out, _ = run_cli(capsys, "idc", "--dist", "m", "--rate", "2.0",
                         "--t-min", "0.1", "--t-max", "100",
                         "--per-decade", "5")
    assert rc == 0
    vals = [float(line.split(",")[1]) for line in out.strip().splitlines()[1:]]
    assert_allclose(vals, 1.0, atol=1e-9)


def test_idc_rejects_unknown_dist(capsys):
    rc, _, err = run_cli(capsys, "idc", "--dist", "weibull", "--rate", "1")
    assert rc == 2
    assert "weibull" in err


def test_idc_rejects_contradictory_scv(capsys):
    rc, _, err = run_cli(capsys, "idc", "--dist", "erlang2", "--rate", "1",
                         "--scv", "3.0")
    assert rc == 2


def test_bad_json_file_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    rc, _, err = run_cli(capsys, "analyze", "--spec", str(path))
    assert rc == 2
    assert "line" in err


def test_missing_file_exits_2(capsys):
    rc, _, err = run_cli(capsys, "analyze", "--spec", "/no/such/file.json")
    assert rc == 2


def test_unknown_builtin_exits_2(capsys):
    rc, _, err = run_cli(capsys, "analyze", "--spec", "builtin:nonexistent")
    assert rc == 2


def test_structurally_bad_spec_exits_2(tmp_path, capsys):
    path = tmp_path / "nostations.json"
    path.write_text(json.dumps({"routing": [[0.0]]}))
    rc, _, err = run_cli(capsys, "analyze", "--spec", str(path))
    assert rc == 2
    assert "stations" in err


def test_unstable_model_exits_1(tmp_path, capsys):
    spec = {
        "stations": [{"service": {"rate": 1.0, "scv": 1.0},
                      "arrival": {"rate": 1.5}}],
        "routing": [[0.0]],
    }
    path = tmp_path / "unstable.json"
    path.write_text(json.dumps(spec))
    rc, _, err = run_cli(capsys, "analyze", "--spec", str(path))
    assert rc == 1
    assert "unstable" in err.lower()


def test_empirical_spec_cannot_simulate_exits_1(tmp_path, capsys):
    spec = {
        "stations": [{
            "service": {"dist": "empirical", "rate": 1.0,
                        "idc": {"grid": [0.1, 10.0], "values": [1.0, 1.2],
                                "asymptote": 1.2}},
            "arrival": {"rate": 0.5}}],
        "routing": [[0.0]],
    }
    path = tmp_path / "empirical.json"
    path.write_text(json.dumps(spec))
    # the analyzer accepts a tabulated service dispersion curve
    rc, _, _ = run_cli(capsys, "analyze", "--spec", str(path))
    assert rc == 0
    # the simulator cannot sample from one
    rc, _, err = run_cli(capsys, "simulate", "--spec", str(path),
                         "--events", "1000", "--replications", "1")
    assert rc == 1


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "oqnet.cli", "idc", "--dist", "d",
         "--rate", "1", "--t-min", "1", "--t-max", "10",
         "--per-decade", "2"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("t,idc")
