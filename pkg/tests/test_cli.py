import csv
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from nlschrodinger.cli import (CACHE_NAME, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, CacheError,
                               main, read_cache)
from nlschrodinger.config import load_config

SMALL = """\
[grid]
half_width = 8
n = 321

[sim]
dt = 0.01
n_paths = 100
probes = 0.0, 0.5

[checks]
box_sizes = 8, 16
gauge_probes = 0.0
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# nlschrodinger ")
    return list(csv.DictReader(line for line in lines if not line.startswith("#")))


def run(*args):
    return main([*map(str, args), "--quiet"])


def test_assemble_cache_round_trip(small_cfg, tmp_path):
    out = tmp_path / "a"
    assert run("assemble", "--config", small_cfg, "--out", out) == EXIT_OK
    cfg = load_config(small_cfg)
    arrays = read_cache(out / CACHE_NAME, cfg)
    assert arrays["A_Y"].shape == (321, 321)
    assert np.array_equal(arrays["A_Y"], arrays["A_Y"].T)
    # the seed is not an assembly input
    assert read_cache(out / CACHE_NAME, cfg.with_seed(99))["b_rho"].shape == (321,)
    other = replace(cfg, mu=replace(cfg.mu, a_plus=0.9))
    with pytest.raises(CacheError):
        read_cache(out / CACHE_NAME, other)


def test_groundstate_is_deterministic(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("groundstate", "--config", small_cfg, "--out", a) == EXIT_OK
    assert run("assemble", "--config", small_cfg, "--out", b) == EXIT_OK
    assert run("groundstate", "--config", small_cfg, "--out", b) == EXIT_OK
    assert (a / "groundstate.csv").read_bytes() == (b / "groundstate.csv").read_bytes()
    row = read_rows(a / "groundstate_manifest.csv")[0]
    assert row["residual_ok"] == "true" and row["bound_ok"] == "true"
    rows = read_rows(a / "groundstate.csv")
    assert len(rows) == 321 and min(float(r["h"]) for r in rows) > 0


def test_simulate_smoke_and_reproducible(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--config", small_cfg, "--out", a) == EXIT_OK
    assert run("simulate", "--config", small_cfg, "--out", b) == EXIT_OK
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()
    rows = read_rows(a / "simulate.csv")
    assert [float(r["x"]) for r in rows] == [0.0, 0.5]
    assert all(r["n_paths"] == "100" for r in rows)


def test_seed_override_changes_estimates(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--config", small_cfg, "--out", a) == EXIT_OK
    assert run("simulate", "--config", small_cfg, "--out", b, "--seed", 5) == EXIT_OK
    ma = [r["mean"] for r in read_rows(a / "simulate.csv")]
    mb = [r["mean"] for r in read_rows(b / "simulate.csv")]
    assert ma != mb


def test_paths_override_shrinks_stderr(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--config", small_cfg, "--out", a, "--paths", 200) == EXIT_OK
    assert run("simulate", "--config", small_cfg, "--out", b, "--paths", 800) == EXIT_OK
    sa = np.array([float(r["stderr"]) for r in read_rows(a / "simulate.csv")])
    sb = np.array([float(r["stderr"]) for r in read_rows(b / "simulate.csv")])
    assert np.all(sb / sa == pytest.approx(0.5, rel=0.35))


def test_gauge_command(small_cfg, tmp_path):
    out = tmp_path / "g"
    assert run("gauge", "--config", small_cfg, "--out", out, "--paths", 100) == EXIT_OK
    text = (out / "gauge.csv").read_text()
    assert "# theta " in text
    assert float(read_rows(out / "gauge.csv")[0]["mean"]) > 0


def test_verify_subset_writes_single_report(small_cfg, tmp_path):
    out = tmp_path / "v"
    assert run("verify", "--config", small_cfg, "--out", out, "--checks", "identities") == EXIT_OK
    rows = read_rows(out / "manifest.csv")
    assert [r["name"] for r in rows] == ["identities"]
    assert rows[0]["passed"] == "true"
    assert (out / "check_identities.csv").exists() and (out / "reports.json").exists()


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[grid]\nn = 8\n")
    assert run("groundstate", "--config", bad, "--out", tmp_path) == EXIT_CONFIG
    assert run("verify", "--out", tmp_path, "--checks", "nope") == EXIT_CONFIG
    assert run("simulate", "--config", tmp_path / "missing.cfg", "--out", tmp_path) == EXIT_CONFIG


def test_exit_code_check_failure(tmp_path):
    path = tmp_path / "sub.cfg"
    path.write_text(SMALL + "supercritical_factor = 0.5\n")
    assert run("verify", "--config", path, "--out", tmp_path, "--checks", "gauge_supercritical") == EXIT_CHECK
    assert read_rows(tmp_path / "manifest.csv")[0]["passed"] == "false"


def test_exit_code_numerical_failure(tmp_path):
    # with the unscaled F no multiple of mu+ reaches lambda = 1
    path = tmp_path / "crit.cfg"
    path.write_text(SMALL + "critical_fplus_scale = 1.0\n")
    assert run("verify", "--config", path, "--out", tmp_path, "--checks", "harmonicity_critical") == EXIT_NUMERICAL


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "nlschrodinger.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("assemble", "groundstate", "simulate", "gauge", "verify"):
        assert name in res.stdout
