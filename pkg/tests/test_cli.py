import csv
import json
from pathlib import Path

import pytest

from groupserver.cli import (EXIT_CONFIG, EXIT_INSTABILITY, EXIT_NONCONVERGENCE, EXIT_OK,
                             EXIT_VALIDATION, main)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MODEL = """
model:
  lambda: 10
  groups:
    - {servers: 3, mu: 6, c: 7}
    - {servers: 4, mu: 4, c: 8}
    - {servers: 3, mu: 2, c: 5}
"""


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def strip_volatile(data):
    """Drop fields that legitimately change between runs."""
    if isinstance(data, dict):
        return {k: strip_volatile(v) for k, v in data.items()
                if k not in ("provenance", "seconds")}
    if isinstance(data, list):
        return [strip_volatile(x) for x in data]
    return data


def test_solve_writes_json_and_csv(tmp_path):
    out = tmp_path / "out"
    code = main(["solve", "--config", str(CONFIGS / "example2.yaml"),
                 "--out", str(out), "--format", "both"])
    assert code == EXIT_OK
    data = json.loads((out / "report.json").read_text())
    res = data["results"]
    assert data["mode"] == "algorithm2"
    assert res["thresholds"] == [1, 9, 21]
    assert res["eta"]["method"] == "algorithm2"
    assert abs(res["eta"]["value"] - 13.6965) < 1e-3

    policy = read_csv(out / "policy.csv")
    assert policy[0] == ["n", "group_1", "group_2", "group_3"]
    assert len(policy) - 1 == res["frontier"] + 10 + 1
    curves = read_csv(out / "curves.csv")
    assert curves[0] == ["n", "g", "G"]
    assert len(curves) == len(policy)
    trace = read_csv(out / "trace.csv")
    assert len(trace) - 1 == res["trace"]["iterations"]


def test_solve_algorithm_flag(tmp_path, capsys):
    cfg = write(tmp_path, MODEL)
    assert main(["solve", "--config", cfg, "--algorithm", "1"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["mode"] == "algorithm1"
    assert data["results"]["eta"]["method"] == "algorithm1"


def test_heuristic_cmu_adds_comparison(tmp_path, capsys):
    cfg = write(tmp_path, MODEL.replace("c: 7", "c: 4").replace("c: 8", "c: 3")
                .replace("c: 5", "c: 1"))
    assert main(["solve", "--config", cfg]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["mode"] == "algorithm1"
    assert main(["solve", "--config", cfg, "--heuristic-cmu"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)["results"]
    assert res["heuristic"] is True
    assert abs(res["comparison"]["error_percent"] - 9.97) < 0.1


def test_output_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["solve", "--config", str(CONFIGS / "example2.yaml"),
                     "--out", str(tmp_path / name), "--format", "both"]) == EXIT_OK
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert strip_volatile(a) == strip_volatile(b)
    for table in ("policy.csv", "curves.csv", "trace.csv"):
        assert (tmp_path / "a" / table).read_text() == (tmp_path / "b" / table).read_text()


def test_evaluate(capsys):
    assert main(["evaluate", "--config", str(CONFIGS / "example2_evaluate.yaml")]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)["results"]
    assert res["eta"]["method"] == "exact evaluation"
    assert abs(res["eta"]["value"] - 13.6965) < 1e-3


def test_simulate_seed_override(tmp_path, capsys):
    cfg = write(tmp_path, MODEL + "policy: {thresholds: [1, 9, 21]}\n"
                "simulation: {horizon: 2e4, seed: 1}\n")
    assert main(["simulate", "--config", cfg, "--seed", "5"]) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert first["provenance"]["seed"] == 5
    assert main(["simulate", "--config", cfg, "--seed", "5"]) == EXIT_OK
    second = json.loads(capsys.readouterr().out)
    assert first["results"]["eta"] == second["results"]["eta"]


def test_brute_force(tmp_path, capsys):
    cfg = write(tmp_path, MODEL)
    assert main(["brute-force", "--config", cfg, "--theta-bound", "25"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)["results"]
    assert res["thresholds"] == [1, 9, 21]
    assert res["theta_bound"] == 25


def test_suite_by_name(tmp_path):
    out = tmp_path / "suite"
    assert main(["suite", "ex6", "--out", str(out), "--format", "both"]) == EXIT_OK
    data = json.loads((out / "report.json").read_text())
    errors = [row["error_percent"] for row in data["table"]]
    assert errors == pytest.approx([0.0, 6.07, 0.0, 0.37, 9.97, 0.0], abs=0.1)
    assert (out / "ex6_summary.csv").exists()


def test_unknown_field_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MODEL + "  lamda: 1\n")
    assert main(["solve", "--config", cfg]) == EXIT_CONFIG
    assert "model.lamda" in capsys.readouterr().err


def test_negative_lambda_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MODEL.replace("lambda: 10", "lambda: -1"))
    assert main(["solve", "--config", cfg]) == EXIT_VALIDATION
    assert "model.lambda" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_iteration_cap_exit_code(tmp_path):
    cfg = write(tmp_path, MODEL)
    assert main(["solve", "--config", cfg, "--max-iters", "1"]) == EXIT_NONCONVERGENCE


def test_policy_without_all_on_tail_rejected(tmp_path, capsys):
    # such a table is refused before stability is even considered
    cfg = write(tmp_path, MODEL.replace("lambda: 10", "lambda: 30")
                + "policy:\n  table: [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]\n")
    assert main(["evaluate", "--config", cfg]) == EXIT_VALIDATION
    assert "every server" in capsys.readouterr().err


def test_instability_exit_code(monkeypatch, tmp_path):
    from groupserver import cli
    from groupserver.errors import StabilityError

    def unstable(cfg):
        raise StabilityError("tail rate below arrival rate")

    monkeypatch.setattr(cli, "run", unstable)
    assert main(["solve", "--config", write(tmp_path, MODEL)]) == EXIT_INSTABILITY


def test_shipped_configs_parse():
    from groupserver.config import load_config
    for path in sorted(CONFIGS.glob("*.yaml")):
        load_config(path)
