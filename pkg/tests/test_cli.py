import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fidkit.cli import main

import oracles

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fd_command(tmp_path):
    out = tmp_path / "fd.csv"
    assert main(["fd", "--config", str(CONFIGS / "fd_exponential.json"), "--out", str(out)]) == 0
    rows = {r["method"]: r for r in read_rows(out)}
    assert set(rows) == {"exact", "fd-expansion", "mle-expansion", "normal-approx", "jeffreys", "pstar"}
    lo = 15.0 / oracles.gamma_quantile_bisect(0.95, 15)
    assert float(rows["exact"]["lower"]) == pytest.approx(lo, rel=1e-9)
    assert float(rows["jeffreys"]["lower"]) == pytest.approx(lo, rel=1e-7)
    assert float(rows["pstar"]["lower"]) == pytest.approx(lo, rel=1e-7)
    meta = json.loads((tmp_path / "fd.csv.meta.json").read_text())
    assert meta["command"] == "fd" and meta["seed"] == 0


def test_curve_writes_one_file_per_method(tmp_path):
    out = tmp_path / "hyperbola_curve.csv"
    assert main(["curve", "--config", str(CONFIGS / "hyperbola_curve.json"), "--out", str(out)]) == 0
    exact = read_rows(tmp_path / "hyperbola_curve_exact.csv")
    approx = read_rows(tmp_path / "hyperbola_curve_approx.csv")
    assert len(exact) == len(approx) == 121
    for row in exact:
        h = float(row["cdf"])
        assert float(row["cc"]) == pytest.approx(abs(1 - 2 * h), abs=1e-15)
    cdf = [float(r["cdf"]) for r in exact]
    assert np.all(np.diff(cdf) >= 0)


def test_two_point_grid(tmp_path):
    cfg = {"command": "curve", "model": "exponential", "methods": ["exact"], "n": 5, "mu_hat": 1.0,
           "grid": {"lo": 0.5, "hi": 2.0, "points": 2}}
    out = tmp_path / "c.csv"
    assert main(["curve", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    assert len(read_rows(out)) == 2


def test_degenerate_grid(tmp_path):
    cfg = {"command": "curve", "model": "exponential", "methods": ["exact"], "n": 5, "mu_hat": 1.0,
           "grid": {"lo": 0.5, "hi": 2.0, "points": 1}}
    assert main(["curve", "--config", str(write_cfg(tmp_path, cfg))]) == 2


def test_expand(tmp_path):
    out = tmp_path / "e.json"
    assert main(["expand", "--config", str(CONFIGS / "expand_exponential.json"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["skew_coefficient"] == pytest.approx(4.0, rel=1e-4)
    assert doc["psi_at_zero"] == pytest.approx(0.56867, abs=1e-5)
    assert doc["metadata"]["central_monotone"] is False


def test_pstar(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["pstar", "--config", str(CONFIGS / "pstar_hyperbola.json"), "--out", str(out)]) == 0
    assert len(read_rows(out)) == 61


def test_mvn_and_permutation(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["mvn", "--config", str(CONFIGS / "multinomial_mvn.json"), "--out", str(a)]) == 0
    cfg = json.loads((CONFIGS / "multinomial_mvn.json").read_text())
    cfg["counts"] = cfg["counts"][::-1]
    cfg["phi"] = False
    assert main(["mvn", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(b)]) == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    np.testing.assert_allclose(da["mean"], [0.3, 0.5])
    np.testing.assert_allclose(da["phi"]["covariance"], [[0.0192, -0.006], [-0.006, 0.0025]], atol=1e-12)
    np.testing.assert_allclose(np.array(db["covariance"])[::-1, ::-1], da["covariance"])
    assert "phi" not in db


def test_coverage(tmp_path):
    cfg = json.loads((CONFIGS / "exponential_coverage.json").read_text())
    cfg["replications"] = 250
    cfg["workers"] = 1
    out = tmp_path / "cov.csv"
    assert main(["coverage", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    assert len(read_rows(out)) == 12
    meta = json.loads((tmp_path / "cov.csv.meta.json").read_text())
    assert meta["seed"] == 12345


def test_coverage_needs_out(tmp_path):
    assert main(["coverage", "--config", str(CONFIGS / "exponential_coverage.json")]) == 2


def test_missing_seed(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "exponential_coverage.json").read_text())
    del cfg["seed"]
    assert main(["coverage", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(tmp_path / "x.csv")]) == 2
    assert "seed" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["exponential_coverage", "hyperbola_curve", "bvn_curve", "bvn_coverage", "multinomial_mvn", "expand_exponential",
                                  "fd_exponential", "pstar_hyperbola"])
def test_validate_shipped_configs(name, capsys):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    assert main([cfg["command"], "--config", str(CONFIGS / f"{name}.json"), "--validate"]) == 0
    assert "config OK" in capsys.readouterr().out


@pytest.mark.parametrize(
    "cfg",
    [
        {"command": "fd", "model": "cauchy", "methods": ["exact"], "level": 0.9},
        {"command": "fd", "model": "exponential", "methods": ["bogus"], "n": 5, "mu_hat": 1.0, "level": 0.9},
        {"command": "mvn", "counts": [60, 50], "n": 100},
        {"command": "fd", "model": "bvn-rho", "methods": ["bogus"], "n": 15, "s1": 19.0, "s2": 4.0, "r": 0.4,
         "level": 0.9},
    ],
)
def test_bad_configs(tmp_path, cfg):
    assert main([cfg["command"], "--config", str(write_cfg(tmp_path, cfg))]) == 2


def test_unreadable_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["fd", "--config", str(p)]) == 2
    assert main(["fd", "--config", str(tmp_path / "nope.json")]) == 2


def test_command_mismatch(tmp_path):
    assert main(["fd", "--config", str(CONFIGS / "hyperbola_curve.json")]) == 2


def test_computation_error_exits_one(tmp_path):
    cfg = {"command": "fd", "model": "binomial", "methods": ["exact"], "n": 10, "s": 10, "level": 0.9}
    assert main(["fd", "--config", str(write_cfg(tmp_path, cfg))]) == 1


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "fidkit.cli", "mvn", "--config", str(CONFIGS / "multinomial_mvn.json")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["mean"] == [0.3, 0.5]
