import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

SRC = str(Path(__file__).resolve().parent.parent / "src")


def run_cli(*args, cwd=None):
    env = {"PYTHONPATH": SRC, "PATH": "/usr/bin:/bin", "HOME": "/tmp", "MPLCONFIGDIR": "/tmp/mpl"}
    return subprocess.run(
        [sys.executable, "-m", "anderson1d", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=env,
        timeout=600,
    )


def write_config(tmp_path, payload) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_selftest_passes(tmp_path):
    proc = run_cli("selftest", "--out", str(tmp_path), "--seed", "1")
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["summary"]["all_passed"] is True
    assert (tmp_path / "selftest.csv").exists()
    assert (tmp_path / "selftest.manifest.json").exists()


def test_missing_subcommand_is_a_usage_error(tmp_path):
    proc = run_cli("--out", str(tmp_path))
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["error"]["type"] == "usage"


def test_schema_violation_exits_2(tmp_path):
    cfg = write_config(tmp_path, {"moments": {"volume": [5]}})
    proc = run_cli("moments", "--config", str(cfg), "--out", str(tmp_path))
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["error"]["type"] == "config"


def test_unknown_key_rejected(tmp_path):
    cfg = write_config(tmp_path, {"momments": {}})
    proc = run_cli("moments", "--config", str(cfg), "--out", str(tmp_path))
    assert proc.returncode == 2


def test_insufficient_samples_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"moments": {"n_realizations": 5}})
    proc = run_cli("moments", "--config", str(cfg), "--out", str(tmp_path))
    assert proc.returncode == 3
    assert json.loads(proc.stdout)["error"]["type"] == "insufficient_samples"


def test_lyapunov_csv_schema(tmp_path):
    cfg = write_config(
        tmp_path,
        {"lyapunov": {"energies": [0.5, 1.5, 2.5], "n_steps": 2000}},
    )
    proc = run_cli("lyapunov", "--config", str(cfg), "--out", str(tmp_path), "--seed", "4")
    assert proc.returncode == 0, proc.stderr
    lines = (tmp_path / "lyapunov.csv").read_text().splitlines()
    assert lines[0] == "E,gamma,stderr,steps"
    assert len(lines) == 4
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 4
        assert int(cells[3]) == 2000
    manifest = json.loads((tmp_path / "lyapunov.manifest.json").read_text())
    assert manifest["schema_version"] == 1
    assert manifest["config"]["lyapunov"]["n_steps"] == 2000
    assert manifest["master_seed"] == 4
    assert (tmp_path / "lyapunov.png").exists()


def test_moments_run_and_manifest_counts(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "model": {"flavor": "discrete", "coupling": {"type": "uniform", "low": 0.0, "high": 2.0}},
            "moments": {
                "volume": [0, 60],
                "energy": 0.5,
                "s": 0.3,
                "distances": {"start": 4, "stop": 24, "step": 2},
                "n_realizations": 300,
            },
        },
    )
    proc = run_cli("moments", "--config", str(cfg), "--out", str(tmp_path), "--seed", "9")
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["counts"]["n_realizations"] == 300
    assert summary["counts"]["used"] + summary["counts"]["flagged"] == 300
    fit_lines = (tmp_path / "moments.fit.csv").read_text().splitlines()
    assert fit_lines[0].startswith("eta_hat,eta_stderr,c_hat,r_squared")
    manifest = json.loads((tmp_path / "moments.manifest.json").read_text())
    assert manifest["counts"]["flagged"] == summary["counts"]["flagged"]
    assert (tmp_path / "moments.png").exists()


def test_moments_deterministic_across_worker_counts(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "moments": {
                "volume": [0, 50],
                "energy": 0.5,
                "s": 0.3,
                "distances": {"start": 4, "stop": 20, "step": 2},
                "n_realizations": 200,
            }
        },
    )
    out1 = tmp_path / "w1"
    out8 = tmp_path / "w8"
    p1 = run_cli("moments", "--config", str(cfg), "--out", str(out1), "--seed", "3", "--workers", "1", "--no-plot")
    p8 = run_cli("moments", "--config", str(cfg), "--out", str(out8), "--seed", "3", "--workers", "8", "--no-plot")
    assert p1.returncode == 0 and p8.returncode == 0
    assert (out1 / "moments.csv").read_bytes() == (out8 / "moments.csv").read_bytes()
    assert (out1 / "moments.fit.csv").read_bytes() == (out8 / "moments.fit.csv").read_bytes()


def test_no_plot_skips_figures(tmp_path):
    cfg = write_config(tmp_path, {"lyapunov": {"energies": [1.0], "n_steps": 1000}})
    proc = run_cli("lyapunov", "--config", str(cfg), "--out", str(tmp_path), "--no-plot")
    assert proc.returncode == 0
    assert not (tmp_path / "lyapunov.png").exists()


def test_green_probe_routes_agree(tmp_path):
    proc = run_cli("green-probe", "--out", str(tmp_path), "--seed", "5")
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["summary"]["max_rel_spread"] < 1e-8
    lines = (tmp_path / "green-probe.csv").read_text().splitlines()
    assert lines[0] == "method,x,y,value_re,value_im,status"
    methods = {line.split(",")[0] for line in lines[1:]}
    assert methods == {"direct_solve", "solution_form", "krein"}


def test_floquet_requires_continuum_model(tmp_path):
    proc = run_cli("floquet", "--out", str(tmp_path))
    assert proc.returncode == 5
    assert json.loads(proc.stdout)["error"]["type"] == "FlavorMismatch"


def test_floquet_runs_on_continuum_model(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "model": {
                "flavor": "continuum",
                "coupling": {"type": "uniform", "low": 0.0, "high": 1.0},
                "background": [0.0],
                "single_site": [1.0],
                "subcells_per_unit": 1,
            },
            "floquet": {"energies": {"start": -2.0, "stop": 8.0, "count": 40}},
        },
    )
    proc = run_cli("floquet", "--config", str(cfg), "--out", str(tmp_path))
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert set(summary["summary"]["classes_seen"]) >= {"band", "gap"}


def test_print_config_expands_defaults(tmp_path):
    proc = run_cli("moments", "--print-config", "--seed", "42")
    assert proc.returncode == 0
    cfg = json.loads(proc.stdout)
    assert cfg["seed"] == 42
    assert cfg["moments"]["s"] == 0.3
    assert cfg["model"]["flavor"] == "discrete"


def test_correlator_csv(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "correlator": {
                "volume": [0, 80],
                "energy_cutoff": 0.5,
                "distances": {"start": 2, "stop": 20, "step": 2},
                "n_realizations": 40,
            }
        },
    )
    proc = run_cli("correlator", "--config", str(cfg), "--out", str(tmp_path), "--seed", "2")
    assert proc.returncode == 0, proc.stderr
    lines = (tmp_path / "correlator.csv").read_text().splitlines()
    assert lines[0] == "distance,mean,std_error"
    assert len(lines) == 11


def test_full_precision_floats_round_trip(tmp_path):
    cfg = write_config(tmp_path, {"lyapunov": {"energies": [0.7], "n_steps": 1000}})
    proc = run_cli("lyapunov", "--config", str(cfg), "--out", str(tmp_path), "--seed", "8")
    assert proc.returncode == 0
    line = (tmp_path / "lyapunov.csv").read_text().splitlines()[1]
    gamma = line.split(",")[1]
    assert float(gamma) == float(f"{float(gamma):.17g}")
