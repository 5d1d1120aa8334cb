import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from zop import ConfigurationError
from zop.cli import main
from zop.harness import (FAILURE_MARKER, cadence_rows, parse_config, run_experiment)

MINIMAL = """
problem.name = norm_sharp
problem.n = 5
solver.T = 1000
solver.seed = 1
"""


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.problem.name == "norm_sharp" and cfg.problem.n == 5
    assert cfg.solver.T == 1000 and cfg.solver.seed == 1
    assert cfg.seeds == [1] and cfg.T_values == [1000]
    assert cfg.oracle.kind == "exact"
    assert cfg.solver.mu == 0.1 and cfg.solver.step_mode == "theorem_b1"
    assert list(cfg.solver.x0) == [0.0] * 5
    assert not cfg.certify.enabled


def test_negative_mu_is_named():
    with pytest.raises(ConfigurationError) as ei:
        parse_config(MINIMAL + "solver.mu = -0.1\n")
    assert "solver.mu" in [k for k, _ in ei.value.violations]


def test_x0_outside_box_is_named():
    text = "problem.name = cusp_box\nproblem.n = 2\nsolver.x0 = 3.0, 0.0\n"
    with pytest.raises(ConfigurationError) as ei:
        parse_config(text)
    assert "solver.x0" in [k for k, _ in ei.value.violations]


def test_all_violations_are_reported():
    text = """
problem.name = norm_sharp
problem.n = 2
solver.mu = abc
solver.T = -3
oracle.kind = psychic
bogus.key = 1
solver.x0 = 1, 2, 3
"""
    with pytest.raises(ConfigurationError) as ei:
        parse_config(text)
    keys = {k for k, _ in ei.value.violations}
    assert {"solver.mu", "solver.T", "oracle.kind", "bogus.key", "solver.x0"} <= keys


def test_default_oracle_kinds_and_sweeps():
    cfg = parse_config("problem.name = two_stage_qp\nproblem.n = 2\nsweep.seeds = 0:3\n"
                       "sweep.T_values = 10, 20\n")
    assert cfg.oracle.kind == "inner_min"
    assert cfg.seeds == [0, 1, 2] and cfg.T_values == [10, 20]
    assert parse_config("problem.name = mm_instant\nproblem.n = 2\n").oracle.kind == "inner_max"
    assert parse_config("problem.name = mm_ergodic\nproblem.n = 2\n").oracle.kind == "ergodic"


def test_cadence_rows():
    assert cadence_rows(100, 37) == [0, 25, 37, 50, 75, 100]
    assert cadence_rows(0, 0) == [0]


def test_single_run_outputs(tmp_path):
    cfg = parse_config(MINIMAL + f"solver.T = 0\noutput_dir = {tmp_path / 'out'}\n")
    assert run_experiment(cfg) == 0
    run = tmp_path / "out" / "seed1_T0"
    rows = read_csv(run / "trajectory.csv")
    assert rows[0] == ["t", "alpha", "grad_est_norm", "plus_val", "minus_val", "x_norm"]
    assert len(rows) == 2
    summary = json.loads((run / "summary.json").read_text())
    for key in ("seed", "T", "mu", "delta_bound", "t_star", "env_grad_norm_at_tstar",
                "wallclock_sec", "oracle_calls"):
        assert key in summary
    assert summary["oracle_calls"] == 2
    assert (tmp_path / "out" / "aggregate.json").exists()


def test_certified_run_accounting_and_columns(tmp_path):
    text = MINIMAL.replace("solver.T = 1000", "solver.T = 40") + (
        "problem.n = 2\ncertify.enabled = true\ncertify.epsilon = 0.5\ncertify.iters = 50\n"
        "certify.batch = 8\nsolver.x0 = 0.5, 0.5\n"
        f"output_dir = {tmp_path}\n")
    cfg = parse_config(text.replace("problem.n = 5\n", ""))
    assert run_experiment(cfg) == 0
    run = tmp_path / "seed1_T40"
    rows = read_csv(run / "trajectory.csv")
    assert rows[0][-1] == "env_grad_norm" and len(rows) == 42
    summary = json.loads((run / "summary.json").read_text())
    certified = [r for r in rows[1:] if r[-1] != ""]
    assert len(certified) == len(cadence_rows(40, summary["t_star"]))
    assert summary["solver_oracle_calls"] == 2 * 41
    assert summary["certification_oracle_calls"] == len(certified) * 2 * 50 * 8
    assert summary["oracle_calls"] == (summary["solver_oracle_calls"]
                                       + summary["certification_oracle_calls"])
    assert summary["env_grad_norm_at_tstar"] == pytest.approx(float(rows[1 + summary["t_star"]][-1]))


def test_sweep_aggregate_and_determinism(tmp_path):
    base = ("problem.name = max_affine\nproblem.n = 2\nsolver.T = 200\nsweep.seeds = 0:4\n"
            "certify.enabled = true\ncertify.iters = 40\ncertify.batch = 8\n"
            "certify.cadence = 1.0\n")
    a = parse_config(base + f"output_dir = {tmp_path / 'a'}\n")
    b = parse_config(base + f"output_dir = {tmp_path / 'b'}\n")
    assert run_experiment(a, jobs=1) == 0
    assert run_experiment(b, jobs=2) == 0
    for s in range(4):
        ta = (tmp_path / "a" / f"seed{s}_T200" / "trajectory.csv").read_bytes()
        tb = (tmp_path / "b" / f"seed{s}_T200" / "trajectory.csv").read_bytes()
        assert ta == tb
    agg = json.loads((tmp_path / "a" / "aggregate.json").read_text())
    entry = agg["per_T"]["200"]
    assert entry["runs"] == 4 and entry["seeds"] == [0, 1, 2, 3]
    norms = [json.loads((tmp_path / "a" / f"seed{s}_T200" / "summary.json").read_text())
             ["env_grad_norm_at_tstar"] for s in range(4)]
    assert entry["mean_env_grad_norm"] == pytest.approx(np.mean(norms))
    assert entry["std_env_grad_norm"] == pytest.approx(np.std(norms, ddof=1))


def test_failure_marker(tmp_path):
    text = ("problem.name = two_stage_qp\nproblem.n = 2\noracle.tol = 1e-14\noracle.budget = 1\n"
            f"solver.T = 10\nsolver.x0 = 0.5, 0.5\noutput_dir = {tmp_path}\n")
    assert run_experiment(parse_config(text)) == 1
    run = tmp_path / "seed0_T10"
    assert (run / FAILURE_MARKER).exists()
    assert json.loads((run / "summary.json").read_text())["complete"] is False
    assert json.loads((tmp_path / "aggregate.json").read_text())["failures"]


def test_cli_commands(tmp_path, capsys):
    text = MINIMAL.replace("solver.T = 1000", "solver.T = 5").replace("problem.n = 5",
                                                                     "problem.n = 2")
    cfg = write(tmp_path, text + "certify.epsilon = 0.1\ncertify.iters = 20\n")
    assert main(["list-problems"]) == 0
    assert "two_stage_qp" in capsys.readouterr().out
    assert main(["run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "seed3_T5" / "summary.json").exists()
    capsys.readouterr()
    assert main(["certify", "--config", str(cfg), "--point", "2.0,0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] is False and out["env_grad_norm"] > 0.5
    assert main(["reference", "--config", str(cfg), "--resolution", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "closed_form"
    bad = write(tmp_path, "problem.name = norm_sharp\nproblem.n = 2\nsolver.mu = -1\n", "bad.cfg")
    assert main(["run", "--config", str(bad)]) == 2
    assert "solver.mu" in capsys.readouterr().err
    assert main(["certify", "--config", str(cfg), "--point", "a,b"]) == 2


def test_cli_entry_point_and_log_level(tmp_path):
    env = dict(os.environ, ZOP_LOG="debug")
    out = subprocess.run([sys.executable, "-m", "zop.cli", "list-problems"], capture_output=True,
                         text=True, env=env, check=True)
    assert "norm_sharp" in out.stdout
    cfg = write(tmp_path, MINIMAL.replace("1000", "3") + f"output_dir = {tmp_path / 'o'}\n")
    res = subprocess.run([sys.executable, "-m", "zop.cli", "run", "--config", str(cfg)],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "DEBUG" in res.stderr
