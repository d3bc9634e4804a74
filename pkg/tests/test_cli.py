"""CLI contract: subcommands, exit codes, output formats."""

import csv
import json

import pytest

from fluidgate.cli import EPISODE_HEADER, instance_path, main

ND = str(instance_path("paper_nondegenerate"))
DG = str(instance_path("paper_degenerate"))


def test_solve_outputs_json(capsys):
    assert main(["solve", ND]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["objective_value"] == pytest.approx(0.76, abs=1e-9)
    assert out["nondegenerate"] is True


def test_solve_rhs_override(capsys):
    assert main(["solve", ND, "--rhs", "1,1.15"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["objective_value"] == pytest.approx(0.80, abs=1e-9)
    assert out["nondegenerate"] is False


def test_stability_command(capsys):
    assert main(["stability", ND]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["degenerate"] is False and out["L"] > 0
    assert main(["stability", DG]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["degenerate"] is True


def test_missing_instance_is_exit_2(capsys, tmp_path):
    # unreadable file surfaces as a runtime failure, not a crash
    rc = main(["solve", str(tmp_path / "nope.json")])
    assert rc == 2


def test_invalid_instance_is_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"types": [], "p": [], "b": []}')
    assert main(["solve", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_simulate_writes_episode_csv(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", ND, "--T", "80", "--trials", "3",
                 "--out", str(out)]) == 0
    lines = (out / "episodes.csv").read_text().splitlines()
    assert lines[0] == EPISODE_HEADER
    assert len(lines) == 4
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["T"] == "80"
    float(row["regret_fluid"])  # parses as float
    assert (out / "summary.json").exists()


def test_simulate_trace(tmp_path, capsys):
    out = tmp_path / "tr"
    assert main(["simulate", ND, "--T", "40", "--trials", "1", "--trace",
                 "--out", str(out)]) == 0
    with open(out / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert rows[0]["t"] == "1"
    assert main(["simulate", ND, "--T", "40", "--trials", "2", "--trace",
                 "--out", str(out)]) == 1  # trace implies one trial


def test_sweep_summary(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", ND, "--T-grid", "60,120", "--trials", "4",
                 "--out", str(out)]) == 0
    lines = (out / "sweep_summary.csv").read_text().splitlines()
    assert lines[0].startswith("T,trials,mean_regret_fluid")
    assert len(lines) == 3


def test_sweep_bad_grid(capsys):
    assert main(["sweep", ND, "--T-grid", "200,100", "--trials", "4"]) == 1


def test_decompose_command(capsys):
    assert main(["decompose", ND, "--T", "100", "--trials", "5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) >= {"term_basic", "term_rejected", "term_leftover",
                        "total_lhs", "total_rhs"}


def test_decompose_degenerate_fails(capsys):
    assert main(["decompose", DG, "--T", "100", "--trials", "5"]) == 2


def test_compare_flags_underpowered(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", ND, "--T", "60", "--trials", "4",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "compare_summary.json").read_text())
    assert summary["underpowered"] is True
    assert (out / "paired_differences.csv").exists()


def test_figure2_small(tmp_path, capsys):
    out = tmp_path / "f2"
    assert main(["figure2", "--T", "50", "--trials", "4",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "figure2_summary.json").read_text())
    assert summary["trials"] == 4
    diffs = (out / "figure2_differences.csv").read_text().splitlines()
    assert len(diffs) == 5


def test_figure1_refuses_single_trial(capsys, tmp_path):
    assert main(["figure1", "--T-grid", "50,100", "--trials", "1",
                 "--out", str(tmp_path / "f1")]) == 1


def test_float_format_17_digits(tmp_path):
    out = tmp_path / "sim17"
    assert main(["simulate", ND, "--T", "60", "--trials", "2",
                 "--out", str(out)]) == 0
    lines = (out / "episodes.csv").read_text().splitlines()
    val = lines[1].split(",")[3]
    assert float(val) == float(format(float(val), ".17g"))
