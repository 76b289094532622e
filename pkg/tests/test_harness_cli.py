import json
import math
import subprocess
import sys

import numpy as np
import pytest

from robustse.cli import main
from robustse.errors import ConfigError
from robustse.harness import (ExperimentConfig, linear_trial, load_config, power_trial,
                              render_csv, run, write_outputs)


def _csv_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


# ---------------------------------------------------------------- config

def test_config_defaults_and_validation():
    c = ExperimentConfig("linear")
    assert (c.n, c.m, c.trials, c.error_sigma) == (150, 60, 100, 4.0)
    assert ExperimentConfig("power").error_sigma == 0.5
    assert ExperimentConfig("power").trials == 50
    for bad in ({"kind": "nope"}, {"kind": "linear", "trials": 0},
                {"kind": "linear", "n": 10, "m": 10}, {"kind": "linear", "rhos": (1.5,)},
                {"kind": "linear", "eps_rule": "x"}, {"kind": "bounds", "deltas": ()}):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)


def test_digest_ignores_output_and_workers():
    a = ExperimentConfig("linear", trials=3)
    assert a.digest() == a.replace(workers=4, output="x.csv").digest()
    assert a.digest() != a.replace(seed=1).digest()


def test_ini_config(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text("[experiment]\nkind = linear\nn = 20\nm = 5   ; states\n"
                 "sigmas = 0, 0.5\nrhos = 0.1\ntrials = 2\n")
    c = load_config(p)
    assert (c.n, c.m, c.sigmas, c.rhos, c.trials) == (20, 5, (0.0, 0.5), (0.1,), 2)
    assert load_config(p, kind="linear", trials=7).trials == 7
    with pytest.raises(ConfigError):
        load_config(p, kind="power")
    (tmp_path / "bad.ini").write_text("[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.ini")
    (tmp_path / "typo.ini").write_text("[experiment]\nkind = linear\ntrails = 3\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "typo.ini")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


# ---------------------------------------------------------------- bounds

def test_bounds_sweep_values():
    table = run(ExperimentConfig("bounds"))
    alpha = {r["delta"]: r["alpha_star"] for r in table.rows if r["table"] == "alpha"}
    assert abs(alpha[0.5] - 0.332) <= 0.002
    vals = [alpha[d] for d in sorted(alpha)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    varpis = [r["varpi"] for r in table.rows if r["table"] == "varpi"]
    finite = [v for v in varpis if math.isfinite(v)]
    assert finite and all(a < b for a, b in zip(finite, finite[1:]))


def test_csv_header_and_sidecar(tmp_path):
    c = ExperimentConfig("bounds", output=str(tmp_path / "b.csv"))
    text = write_outputs(run(c), c)
    assert text.splitlines()[:4] == ["# robustse 0.1.0", "# kind bounds",
                                     f"# config_hash {c.digest()}", "# seed 42"]
    assert (tmp_path / "b.csv").read_text() == text
    side = json.loads((tmp_path / "b.csv.json").read_text())
    assert side["config_hash"] == c.digest() and side["config"]["kind"] == "bounds"


# ---------------------------------------------------------------- linear

def _small_linear(**kw):
    base = dict(kind="linear", n=40, m=10, sigmas=(0.0, 0.5), rhos=(0.1,), trials=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_linear_rerun_is_byte_identical():
    c = _small_linear()
    assert render_csv(run(c), c) == render_csv(run(c), c)


def test_linear_workers_do_not_change_output():
    c = _small_linear()
    assert render_csv(run(c), c) == render_csv(run(c.replace(workers=2)), c)


def test_linear_single_trial_has_no_nan():
    c = _small_linear(trials=1)
    rows = _csv_rows(render_csv(run(c), c))
    assert rows and all("nan" not in r.values() for r in rows)


def test_rng_streams_independent_of_grid():
    a = linear_trial(_small_linear(), 0.5, 0.1, 1)
    b = linear_trial(_small_linear(sigmas=(0.5, 1.0, 2.0), rhos=(0.05, 0.1)), 0.5, 0.1, 1)
    assert a == b
    c = linear_trial(_small_linear(), 0.5, 0.1, 2)
    assert c["mixed"] != a["mixed"]


def test_linear_noiseless_cell_recovers_exactly():
    table = run(_small_linear(sigmas=(0.0,), trials=4))
    row = table.rows[0]
    assert row["mixed_success"] == 1.0 and row["l1_success"] == 1.0


# ---------------------------------------------------------------- power and verify

def test_power_trial_clean_data(ieee30):
    c = ExperimentConfig("power", sigmas=(0.0,), rhos=(0.0,), trials=1)
    out = power_trial(c, 0.0, 0.0, 0, model=ieee30)
    assert out["iterative"] < 1e-5
    assert out["wls_oracle"] < 1e-5
    assert out["bhat"] < 1e-5
    assert out["iterative_converged"]


def test_verify_sweep_rows():
    c = ExperimentConfig("verify", n=30, m=3, trials=2, k_max=3, eps=0.0)
    table = run(c)
    assert len(table.rows) == 6
    assert set(table.summary["mean_C"]) == {1, 2, 3}
    assert all(r["beta"] == 0.0 for r in table.rows if r["C"] > 1)


# ---------------------------------------------------------------- CLI

def test_cli_bounds_stdout(capsys):
    assert main(["bounds", "--deltas", "0.5", "--mus", "0.002"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# robustse") and "alpha" in out


def test_cli_linear_to_file(tmp_path):
    out = tmp_path / "lin.csv"
    rc = main(["linear", "--n", "30", "--m", "5", "--sigmas", "0", "--rhos", "0.1",
               "--trials", "2", "-o", str(out)])
    assert rc == 0
    rows = _csv_rows(out.read_text())
    assert rows[0]["mixed_success"] == "1"
    assert (tmp_path / "lin.csv.json").exists()


def test_cli_config_errors_exit_1(tmp_path, capsys):
    assert main(["linear", "--n", "5", "--m", "5", "--trials", "1"]) == 1
    assert main(["linear", "--config", str(tmp_path / "none.ini")]) == 1
    assert main(["power", "--network", str(tmp_path / "none.cdf"), "--trials", "1"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["linear", "--sigmas", "a,b"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    capsys.readouterr()


def test_cli_decode(tmp_path, capsys):
    g = np.random.default_rng(0)
    H = g.standard_normal((30, 4))
    x = g.uniform(-1, 1, 4)
    y = H @ x
    y[[3, 17]] += 5.0
    np.savez(tmp_path / "inst.npz", H=H, y=y)
    assert main(["decode", str(tmp_path / "inst.npz"), "-o", str(tmp_path / "x.txt")]) == 0
    x_hat = np.loadtxt(tmp_path / "x.txt")
    assert np.linalg.norm(x_hat - x) < 1e-6 * np.linalg.norm(x)
    assert main(["decode", str(tmp_path / "inst.npz"), "--sigma", "0.1"]) == 0
    assert len(capsys.readouterr().out.split()) == 4


def test_cli_numeric_failure_exit_2(tmp_path, capsys):
    H = np.ones((10, 2))  # rank one
    np.savez(tmp_path / "sing.npz", H=H, y=np.arange(10.0))
    assert main(["decode", str(tmp_path / "sing.npz")]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_cli_bad_instance_exit_1(tmp_path, capsys):
    (tmp_path / "junk.npz").write_text("not an archive")
    assert main(["decode", str(tmp_path / "junk.npz")]) == 1
    np.savez(tmp_path / "noH.npz", y=np.zeros(3))
    assert main(["decode", str(tmp_path / "noH.npz")]) == 1
    capsys.readouterr()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "robustse", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("robustse")
