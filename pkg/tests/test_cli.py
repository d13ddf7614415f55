import csv
import json
import subprocess
import sys

import pytest

from rbevals import checks, cli


def run(argv, tmp_path, name="r.json"):
    out = tmp_path / name
    code = cli.main(list(argv) + ["--out", str(out)])
    return code, out


def load(path):
    return json.loads(path.read_text())


def test_bernoulli_example(tmp_path):
    code, out = run(["bernoulli", "--p0", "0.5", "--lambda-exp", "2", "--n", "4", "--p", "0.7"], tmp_path)
    assert code == 0
    rep = load(out)
    gap = next(r for r in rep["rows"] if r["name"] == "utility gap log p=0.7")
    assert gap["passed"] and gap["estimate"] > 0 and gap["std_error"] == 0.0
    assert rep["config"]["n"] == 4 and "version" in rep


def test_pareto_example(tmp_path):
    code, out = run(["pareto", "--alpha0", "1", "--alpha1", "2", "--n", "5", "--m", "1", "--draws", "100000", "--seed", "7"], tmp_path)
    assert code == 0
    row = next(r for r in load(out)["rows"] if r["name"] == "GROW value E[log E*]")
    assert row["estimate"] == pytest.approx(0.7726, abs=0.01)
    assert row["tolerance"]["relation"] == "~="


def test_missing_seed_is_config_error(capsys):
    assert cli.main(["pareto", "--alpha0", "1", "--alpha1", "2", "--n", "5", "--draws", "10000"]) == 2
    assert "--seed" in capsys.readouterr().err


def test_unknown_subcommand():
    assert cli.main(["frobnicate"]) == 2


def test_bad_parameter_is_config_error(tmp_path, capsys):
    code, _ = run(["bernoulli", "--p0", "1.5", "--lambda-exp", "2", "--n", "4"], tmp_path)
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_unwritable_out_is_io_error(tmp_path):
    code = cli.main(["ebh", "--e-values", "25", "--alpha", "0.05", "--out", str(tmp_path / "no" / "such" / "dir.json")])
    assert code == 3


def test_design_errors(tmp_path):
    assert cli.main(["regression", "--design", str(tmp_path / "missing.json"), "--draws", "100", "--seed", "1"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text('{"X": [[1, 0], [0, 1]]}')
    assert cli.main(["regression", "--design", str(bad), "--draws", "100", "--seed", "1", "--out", str(tmp_path / "o")]) == 2


def test_regression_subcommand(tmp_path):
    design = tmp_path / "d.json"
    design.write_text(json.dumps({"X": [[1, 0], [0, 1]], "sigma2": 1, "d": 1, "theta_star": [1, 0]}))
    code, out = run(["regression", "--design", str(design), "--draws", "100000", "--seed", "3"], tmp_path)
    assert code == 0
    rows = load(out)["rows"]
    assert rows[0]["estimate"] == 0.5
    assert len([r for r in rows if r["name"].startswith("mean H under null")]) == 5


def test_failing_row_gives_exit_one(tmp_path, monkeypatch):
    monkeypatch.setattr(checks, "ebh_rows", lambda e, a: [checks.Row("forced", 2.0, 0.0, "<=", 1.0, 0.0)])
    code, out = run(["ebh", "--e-values", "1", "--alpha", "0.05"], tmp_path)
    assert code == 1 and load(out)["passed"] is False


def test_ebh_subcommand(tmp_path):
    code, out = run(["ebh", "--e-values", "41,39", "--alpha", "0.05"], tmp_path)
    rows = load(out)["rows"]
    assert code == 0 and rows[0]["estimate"] == 2.0 and rows[0]["detail"] == "0 1"


def test_env_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env.json"
    monkeypatch.setenv(cli.OUT_ENV, str(target))
    assert cli.main(["ebh", "--e-values", "25", "--alpha", "0.05", "--out", str(tmp_path / "flag.json")]) == 0
    assert target.exists() and not (tmp_path / "flag.json").exists()


def test_infinities_serialized_as_strings():
    row = checks.Row("r", float("inf"), 0.0, ">=", 0.0, 0.0)
    d = row.to_dict()
    assert d["estimate"] == "inf" and checks.Row.from_dict(d) == row


EPROCESS = ["eprocess", "--p", "0.8", "--bets", "geometric:1.2,10", "--burnin", "4",
            "--rules", "fixed:4,fixed:10,threshold:5,fixed:6|threshold:3", "--paths", "20000", "--seed", "5"]


def test_eprocess_rows(tmp_path):
    code, out = run(EPROCESS, tmp_path)
    rows = load(out)["rows"]
    assert code == 0
    assert rows[0]["name"].startswith("closed form vs brute-force")
    assert sum("null mean G_tau" in r["name"] for r in rows) == 8


def test_same_seed_byte_identical(tmp_path):
    _, a = run(EPROCESS, tmp_path, "a.json")
    _, b = run(EPROCESS + ["--jobs", "3"], tmp_path, "b.json")
    assert a.read_bytes() == b.read_bytes()


def test_timing_flag(tmp_path):
    _, out = run(["ebh", "--e-values", "25", "--alpha", "0.05", "--timing"], tmp_path)
    assert load(out)["duration_s"] >= 0
    _, out = run(["ebh", "--e-values", "25", "--alpha", "0.05"], tmp_path)
    assert "duration_s" not in load(out)


def test_replay_identical(tmp_path):
    _, first = run(EPROCESS, tmp_path, "first.json")
    code, again = run(["replay", str(first)], tmp_path, "again.json")
    rep = load(again)
    assert code == 0
    assert rep["rows"][:-1] == load(first)["rows"]
    assert rep["rows"][-1]["name"] == "replay identical to original" and rep["rows"][-1]["passed"]


def test_replay_after_seed_edit_is_flagged(tmp_path):
    _, first = run(["cauchy", "--draws", "20000", "--seed", "1"], tmp_path, "first.json")
    doc = load(first)
    doc["config"]["seed"] = 2
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(doc))
    code, again = run(["replay", str(edited)], tmp_path, "again.json")
    flag = load(again)["rows"][-1]
    assert code == 1 and not flag["passed"] and "mean E/G under normal" in flag["detail"]


def test_replay_csv_round_trip(tmp_path):
    _, first = run(["pareto", "--alpha0", "1", "--alpha1", "2", "--n", "5", "--draws", "20000", "--seed", "7", "--format", "csv"], tmp_path, "first.csv")
    with open(first, newline="") as fh:
        records = list(csv.DictReader(fh))
    assert "row.tolerance.relation" in records[0] and "config.seed" in records[0]
    code, again = run(["replay", str(first), "--format", "json"], tmp_path, "again.json")
    assert code == 0
    ref_code, ref = run(["pareto", "--alpha0", "1", "--alpha1", "2", "--n", "5", "--draws", "20000", "--seed", "7"], tmp_path, "ref.json")
    assert load(again)["rows"][:-1] == load(ref)["rows"]


def test_replay_version_mismatch_warns(tmp_path, capsys):
    _, first = run(["ebh", "--e-values", "25", "--alpha", "0.05"], tmp_path, "first.json")
    doc = load(first)
    doc["version"] = "0.0.0-old"
    first.write_text(json.dumps(doc))
    code, _ = run(["replay", str(first)], tmp_path, "again.json")
    assert code == 0 and "warning" in capsys.readouterr().err


def test_replay_errors(tmp_path):
    assert cli.main(["replay", str(tmp_path / "nope.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"rows": []}))
    assert cli.main(["replay", str(bad)]) == 2


def test_console_script_runs(tmp_path):
    out = tmp_path / "s.json"
    proc = subprocess.run(
        [sys.executable, "-m", "rbevals.cli", "ebh", "--e-values", "25", "--alpha", "0.05", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and load(out)["passed"]
