import csv
import json
import subprocess
import sys

import jsonschema
import pytest

from ergolab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, apply_overrides, load_schema, main


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


TV_SMALL = {
    "target": {"name": "poly_tail", "r": 2, "K": 1},
    "kernel": {"name": "gwm", "eps": 1.0},
    "L": 100, "N": 201, "x0": 0.0, "p0": 1,
    "n_schedule": {"lo": 5, "hi": 60, "per_decade": 10},
    "window": [5, 60],
}


def run_cli(tmp_path, experiment, config, *extra, label="run"):
    args = [experiment, "--config", write_config(tmp_path, config), "--out-dir",
            str(tmp_path / "out"), "--label", label, *extra]
    return main(args), tmp_path / "out" / experiment / label


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_tv_rate_artifacts(tmp_path):
    code, run_dir = run_cli(tmp_path, "tv-rate", TV_SMALL, "--seed", "3")
    assert code == 0
    rows = read_csv(run_dir / "tv_curve.csv")
    assert rows[0] == ["n", "tv", "leaked_bound"]
    assert len(rows) > 5
    rate = json.loads((run_dir / "rate.json").read_text())
    assert "slope" in rate and rate["slope"] < 0
    jsonschema.validate(rate, load_schema("rate"))
    record = json.loads((run_dir / "record.json").read_text())
    jsonschema.validate(record, load_schema("record"))
    assert record["status"] == "ok" and record["config"]["seed"] == 3
    assert "slope" in record["results"]
    assert set(record["files"]) >= {"tv_curve.csv", "rate.json"}


def test_missing_eps_names_field(tmp_path, capsys):
    cfg = {**TV_SMALL, "kernel": {"name": "rwm"}}
    code, _ = run_cli(tmp_path, "tv-rate", cfg)
    assert code == EXIT_CONFIG
    assert "kernel.eps" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "tv-rate", {**TV_SMALL, "bogus": 1})
    assert code == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_mismatched_experiment_rejected(tmp_path):
    code, _ = run_cli(tmp_path, "tv-rate", {**TV_SMALL, "experiment": "coupling"})
    assert code == EXIT_CONFIG


def test_strict_unresolved_tv_is_numeric_failure(tmp_path):
    cfg = {**TV_SMALL, "n_schedule": {"lo": 10, "hi": 3000, "per_decade": 10},
           "window": [10, 3000]}
    code, _ = run_cli(tmp_path, "tv-rate", cfg)
    assert code == EXIT_NUMERIC
    cfg["strict"] = False
    code, run_dir = run_cli(tmp_path, "tv-rate", cfg, label="lenient")
    assert code == 0
    assert json.loads((run_dir / "rate.json").read_text())["unresolved_n"] is not None


def test_failed_check_exit_code_keeps_record(tmp_path):
    cfg = {"xs": [3.0, 6.0, 10.0], "L": 4.0, "N": 201}
    code, run_dir = run_cli(tmp_path, "counterexample-audit", cfg)
    assert code == EXIT_CHECK
    record = json.loads((run_dir / "record.json").read_text())
    assert record["status"] == "check_failed"
    assert record["checks"]["drift_ratio_below_threshold"] is False
    assert record["checks"]["acceptance_final_above_min"] is True


def test_set_overrides(tmp_path):
    cfg = apply_overrides({"kernel": {"name": "rwm"}}, ["kernel.eps=0.5", "target.name=poly_tail"])
    assert cfg == {"kernel": {"name": "rwm", "eps": 0.5}, "target": {"name": "poly_tail"}}
    code, run_dir = run_cli(tmp_path, "acceptance",
                            {"target": {"name": "convex_potential"}, "kernel": {"name": "rwm"},
                             "xs": [1.0]},
                            "--set", "kernel.eps=0.5")
    assert code == 0
    record = json.loads((run_dir / "record.json").read_text())
    assert record["config"]["kernel"]["eps"] == 0.5


COUPLING = {
    "target": {"name": "convex_potential", "p": 2, "a": 1},
    "kernel": {"name": "gwm", "eps": 1.0},
    "xs": [5.0, 20.0], "n": 5, "trials": 30_000,
}
DISPLACEMENT = {
    "target": {"name": "poly_tail"}, "kernel": {"name": "gwm", "eps": 1.0},
    "x0": 1000.0, "T": 300, "replicates": 100, "window": [5, 60],
}


@pytest.mark.parametrize("experiment,config,name", [
    ("coupling", COUPLING, "coupling.csv"),
    ("displacement", DISPLACEMENT, "displacement.csv"),
    ("simulate", {"target": {"name": "poly_tail"}, "kernel": {"name": "gwm", "eps": 1.0},
                  "x0": 0.0, "n": 500}, "trajectory.csv"),
])
def test_csv_byte_identical_across_runs_and_threads(tmp_path, experiment, config, name):
    outs = []
    for label, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        code, run_dir = run_cli(tmp_path, experiment, config, "--seed", "11", "--threads",
                                threads, label=label)
        assert code == 0
        outs.append((run_dir / name).read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert outs[0].split(b"\n", 1)[0].count(b",") >= 1


def test_different_seeds_differ(tmp_path):
    _, a = run_cli(tmp_path, "coupling", COUPLING, "--seed", "1", label="s1")
    _, b = run_cli(tmp_path, "coupling", COUPLING, "--seed", "2", label="s2")
    assert (a / "coupling.csv").read_bytes() != (b / "coupling.csv").read_bytes()


def test_drift_check_guided(tmp_path):
    cfg = {"target": {"name": "poly_tail", "r": 2, "K": 1}, "kernel": {"name": "gwm", "eps": 1.0},
           "lyapunov": {"kind": "guided_poly", "delta": 1.0, "beta": 0.8},
           "x_lo": 50, "x_hi": 500, "grid": 6}
    code, run_dir = run_cli(tmp_path, "drift-check", cfg)
    assert code == 0
    rows = read_csv(run_dir / "drift.csv")
    assert rows[0] == ["x", "p", "ratio", "margin"]
    assert all(float(r[3]) < 0 for r in rows[1:])


def test_tail_reach_cli(tmp_path):
    code, run_dir = run_cli(tmp_path, "lemma-a2", {"k": 3, "n": 20, "trials": 10_000})
    assert code == 0
    res = json.loads((run_dir / "record.json").read_text())["results"]
    assert res["pi_An"]["value"] == pytest.approx(1 / 21600, rel=1e-12)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ergolab.cli", "acceptance", "--out-dir",
                           str(tmp_path), "--label", "x",
                           "--set", 'target={"name": "convex_potential"}',
                           "--set", 'kernel={"name": "rwm", "eps": 1.0}',
                           "--set", "xs=[5, 10]", "--set", 'side="away_from_origin"'],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "acceptance" / "x" / "acceptance.csv").exists()
