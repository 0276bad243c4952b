import json

import pytest

from fermiq import cli


def run_json(args, capsys):
    code = cli.run(args)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture
def thermal_file(tmp_path):
    p = tmp_path / "thermal_04.json"
    p.write_text(json.dumps({"type": "thermal", "occupations": [0.3]}))
    return str(p)


def test_constants(capsys):
    code, doc = run_json(["constants", "--m", "1", "--k", "0", "--no-timestamp"], capsys)
    assert code == 0
    assert doc["result"]["V_canon"] == pytest.approx(2)
    assert doc["result"]["N_canon"] == pytest.approx(1)
    assert doc["config"]["m"] == 1 and "timestamp" not in doc


def test_timestamp_present_by_default(capsys):
    _, doc = run_json(["constants", "--m", "2"], capsys)
    assert "timestamp" in doc


def test_mc_volume(capsys):
    code, doc = run_json(["mc-volume", "--m", "2", "--samples", "1000000", "--seed", "42", "--no-timestamp"], capsys)
    assert code == 0
    r = doc["result"]
    assert r["estimate"] == pytest.approx(7.018, abs=3 * r["stderr"] + 0.01)
    assert r["extra"]["closed_form"] == pytest.approx(7.0183853518857635)
    assert "ratio" in r["extra"] and doc["config"]["seed"] == 42


def test_byte_identical(capsys):
    args = ["mc-unity", "--m", "2", "--samples", "50000", "--seed", "3", "--no-timestamp"]
    cli.run(args)
    a = capsys.readouterr().out
    cli.run(args + ["--workers", "2"])
    b = capsys.readouterr().out
    assert a.replace('"workers": 2', '"workers": 1') == b.replace('"workers": 2', '"workers": 1')
    cli.run(args)
    assert capsys.readouterr().out == a


def test_mc_unity_quadrature(capsys):
    code, doc = run_json(["mc-unity", "--m", "1", "--quadrature", "--no-timestamp"], capsys)
    assert code == 0 and doc["result"]["estimate"] < 1e-12


def test_moments_example(thermal_file, capsys):
    code, doc = run_json(["moments", "--state", thermal_file, "--samples", "100000", "--seed", "7",
                          "--no-timestamp"], capsys)
    assert code == 0
    off = doc["result"]["offset"]
    assert off["exact"][0] == pytest.approx(0.4)
    assert off["estimate"][0] == pytest.approx(0.4, abs=0.03)


def test_qeval(thermal_file, tmp_path, capsys):
    pt = tmp_path / "pt.json"
    pt.write_text(json.dumps({"M": 1, "re": [[0.5, 0], [0, -0.5]], "im": [[0, 0], [0, 0]]}))
    code, doc = run_json(["qeval", "--state", thermal_file, "--point", str(pt), "--no-timestamp"], capsys)
    assert code == 0
    assert doc["result"]["Q"] == pytest.approx((1 + 0.4 * 0.5) / 2)


def test_sample_csv(thermal_file, tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = cli.run(["sample", "--state", thermal_file, "--samples", "5000", "--out", str(out), "--no-timestamp"])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "X_1_2,z_1,Q"
    report = json.loads((tmp_path / "s.csv.report.json").read_text())
    assert report["config"]["samples"] == 5000
    assert report["result"]["n_accepted"] == len(lines) - 1


def test_sample_json(thermal_file, capsys):
    code, doc = run_json(["sample", "--state", thermal_file, "--samples", "3000", "--format", "json",
                          "--no-timestamp"], capsys)
    assert code == 0 and len(doc["result"]["samples"]["Q"]) == doc["result"]["n_accepted"]


@pytest.mark.parametrize("alias", [["oracle-check"], ["oracle", "check"]])
def test_oracle_check(alias, capsys):
    code, doc = run_json(alias + ["--m", "2", "--trials", "2", "--no-timestamp"], capsys)
    assert code == 0
    assert doc["result"]["residuals"]["dual_route"] < 1e-10
    assert doc["result"]["residuals"]["identity_4"] < 1e-5


def test_validation_errors(tmp_path, capsys):
    assert cli.run(["mc-volume", "--m", "0"]) == 2
    assert "--m" in capsys.readouterr().err
    assert cli.run(["mc-volume"]) == 2
    assert cli.run(["frobnicate"]) == 2
    assert cli.run(["moments", "--state", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(["moments", "--state", str(bad)]) == 2
    bad.write_text(json.dumps({"type": "custom", "zeta": {"M": 1, "re": [[1]]}}))
    assert cli.run(["moments", "--state", str(bad)]) == 2
    assert cli.run(["mc-volume", "--m", "2", "--samples", "abc"]) == 2


def test_numerical_failure_exit(capsys):
    code = cli.run(["mc-volume", "--m", "2", "--samples", "20000", "--max-z", "0", "--no-timestamp"])
    captured = capsys.readouterr()
    assert code == 3
    assert "volume |z|" in captured.err
    assert json.loads(captured.out)["failures"]


def test_inconclusive_exit(capsys):
    assert cli.run(["mc-volume", "--m", "4", "--samples", "10"]) == 3


def test_env_workers(monkeypatch, capsys):
    monkeypatch.setenv("FERMIQ_WORKERS", "2")
    _, doc = run_json(["mc-volume", "--m", "1", "--samples", "100", "--no-timestamp"], capsys)
    assert doc["config"]["workers"] == 2
