import json
import subprocess
import sys

import numpy as np
import pytest

from priorlens.cli import main


def test_normal_run_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["normal", "--n", "25", "--reps", "30", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0].startswith("replication,mu,cv,waic")
    assert len(lines) == 1 + 30 * 100
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert {"means", "stds", "histograms", "warnings"} <= set(summary)
    # chosen flag set exactly once per replication and criterion
    flags = np.array([row.split(",")[-7:] for row in lines[1:]], dtype=int).reshape(30, 100, 7)
    assert np.all(flags[:, :, :6].sum(axis=1) == 1)


def test_missing_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('experiment = "ridge"\nn = 10\nseed = 1\n')
    assert main(["ridge", "--config", str(cfg)]) == 2
    assert "replications" in capsys.readouterr().err


def test_config_experiment_mismatch(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('experiment = "ridge"\nn = 10\nseed = 1\nreplications = 2\n')
    assert main(["normal", "--config", str(cfg)]) == 2


def test_ridge_with_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('experiment = "ridge"\nn = 40\nseed = 1\nreplications = 3\ngrid_count = 20\n')
    assert main(["ridge", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "results.csv").read_text().count("\n") == 1 + 3 * 20


def test_criteria_command(tmp_path, capsys):
    data = tmp_path / "x.txt"
    np.savetxt(data, np.random.default_rng(0).normal(1, 1, 25))
    assert main(["criteria", "--data", str(data), "--hyper", "0.01,-1,0.01"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["waic"] == pytest.approx(out["training_error"] + out["functional_variance"] / 25)
    assert main(["criteria", "--data", str(data), "--hyper", "1"]) == 2
    rows = tmp_path / "r.csv"
    rng = np.random.default_rng(1)
    x = 1 + rng.standard_normal((30, 3))
    np.savetxt(rows, np.column_stack([x, x.sum(axis=1) + 0.1 * rng.standard_normal(30)]), delimiter=",")
    assert main(["criteria", "--data", str(rows), "--model", "ridge", "--hyper", "2.0"]) == 0


def test_criteria_numerical_failure_exits_3(tmp_path):
    data = tmp_path / "x.txt"
    np.savetxt(data, [0.5, 0.5])
    assert main(["criteria", "--data", str(data), "--hyper", "0,0,0"]) == 3


def test_check_command():
    assert main(["check"]) == 0
    assert main(["check", "--model", "ridge"]) == 0


def test_rates_command_rejects_short_list():
    assert main(["rates", "--n-values", "25,50"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "priorlens", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "normal" in res.stdout
