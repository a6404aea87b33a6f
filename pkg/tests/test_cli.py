import csv
import io
import json

import pytest

from menshov.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_usage_errors_exit_one(capsys):
    code, _, err = _run(capsys, "no-such-command")
    assert code == 1 and json.loads(err)["error"] == "usage"
    code, _, err = _run(capsys, "build-correction", "--eps", "x", "--delta", "0.2")
    assert code == 1
    code, _, _ = _run(capsys)
    assert code == 1


def test_gen_spectrum_stdout_and_manifest(tmp_path, capsys):
    code, out, _ = _run(capsys, "gen-spectrum", "--n-min", -5, "--n-max", 5, "--seed", 3,
                        "--out", tmp_path, "--stdout")
    assert code == 0
    summary = json.loads(out)
    assert summary["count"] == 11 and summary["strictly_increasing"]
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["command"] == "gen-spectrum" and m["seed"] == 3
    assert m["outputs"] == ["spectrum.csv", "summary.json"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "spectrum.csv",
                                                          "summary.json"]


def test_estimate_prob_near_one_over_64(tmp_path, capsys):
    code, out, _ = _run(capsys, "estimate-prob", "--k", 2, "--trials", 10 ** 6, "--seed", 7,
                        "--out", tmp_path, "--stdout")
    assert code == 0
    r = json.loads(out)
    assert abs(r["p_hat"] - 1 / 64) <= 3 * r["stderr"]
    assert r["analytic"] == 1 / 64


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MENSHOV_OUT", str(tmp_path))
    code, _, _ = _run(capsys, "counterexample", "--alpha", 1, "--n1", 10 ** 4)
    assert code == 0
    rep = json.loads((tmp_path / "counterexample" / "obstruction.json").read_text())
    assert rep["minimal_k"] == 2


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.5\nbeta = 2\nn1 = 10000\n")
    code, out, _ = _run(capsys, "counterexample", "--config", cfg, "--out", tmp_path / "a",
                        "--stdout")
    assert code == 0 and json.loads(out)["minimal_k"] == 7
    code, out, _ = _run(capsys, "counterexample", "--config", cfg, "--beta", 0,
                        "--out", tmp_path / "b", "--stdout")
    assert json.loads(out)["minimal_k"] == 3
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    code, _, _ = _run(capsys, "counterexample", "--alpha", 1, "--config", bad)
    assert code == 1


def test_structured_failure_exits_two(tmp_path, capsys):
    code, _, err = _run(capsys, "build-correction", "--eps", 0.5, "--delta", 0.2,
                        "--strategy", "minimax", "--degree-budget", 8, "--out", tmp_path)
    assert code == 2
    e = json.loads(err)
    assert e["error"] == "AlgorithmFailure"
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "failed"
    assert (tmp_path / "certificate.json").exists()


def test_plant_refusal_exits_two(tmp_path, capsys):
    code, _, err = _run(capsys, "plant", "--k", 5, "--l", 3, "--out", tmp_path)
    assert code == 2 and json.loads(err)["error"] == "PreconditionError"


def test_zero_target_export_is_empty(tmp_path, capsys):
    code, _, _ = _run(capsys, "represent", "--target", "zero", "--stages", 3,
                      "--grid-log2", 8, "--out", tmp_path)
    assert code == 0
    rows = (tmp_path / "coefficients.csv").read_text().strip().splitlines()
    assert rows == ["n,re,im,lambda_n,lambda_offset"]


def test_represent_verify_replay(tmp_path, capsys):
    run = tmp_path / "run"
    code, _, _ = _run(capsys, "represent", "--target", "step", "--stages", 1,
                      "--grid-log2", 10, "--out", run)
    assert code == 0
    assert {"state.json", "stage_01.json", "stage_01_grid.csv", "coefficients.csv",
            "trace.csv", "manifest.json"} <= {p.name for p in run.iterdir()}

    code, out, _ = _run(capsys, "verify", "--state", run, "--out", tmp_path / "v", "--stdout")
    assert code == 0
    v = json.loads(out)
    assert v["cutoffs_ok"]
    rows = list(csv.DictReader(io.StringIO((tmp_path / "v" / "trace.csv").read_text())))
    assert [int(r["N"]) for r in rows] == [1]

    again = tmp_path / "again"
    code, _, _ = _run(capsys, "replay", run / "manifest.json", "--out", again)
    assert code == 0
    for name in json.loads((run / "manifest.json").read_text())["outputs"]:
        assert (run / name).read_bytes() == (again / name).read_bytes(), name


def test_missing_samples_file(tmp_path, capsys):
    code, _, err = _run(capsys, "fit", "--samples", tmp_path / "nope.csv", "--out", tmp_path)
    assert code == 1 and "error" in json.loads(err)


def test_samples_file_target(tmp_path, capsys):
    from fractions import Fraction
    import numpy as np
    from menshov.grid import Grid, GridFunction
    g = Grid(Fraction(1), Fraction(1, 64))
    (tmp_path / "f.csv").write_text(GridFunction.from_callable(g, lambda x: np.cos(x) + 0j).to_csv())
    code, out, _ = _run(capsys, "fit", "--samples", tmp_path / "f.csv", "--out", tmp_path / "o",
                        "--stdout")
    assert code == 0 and json.loads(out)["met"]
