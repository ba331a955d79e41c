import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fidkit.sim_harness import (
    CSV_COLUMNS,
    CoverageReport,
    CoverageRow,
    ExperimentError,
    ExperimentPlan,
    MODELS,
    derive_stream,
    export_report,
    read_csv_report,
    run_experiment,
    version_string,
)

SMALL = dict(
    model="exponential",
    methods=["exact", "fd-expansion", "mle-expansion", "normal-approx"],
    grid=[0.5, 1.0, 2.0],
    n=15,
    level=0.9,
    replications=600,
    seed=99,
)


class TestStreams:
    def test_deterministic(self):
        a = derive_stream(1, 2, 3).random(5)
        b = derive_stream(1, 2, 3).random(5)
        np.testing.assert_array_equal(a, b)

    @given(st.integers(0, 2**32), st.integers(0, 50), st.integers(0, 10**6))
    def test_neighbours_differ(self, seed, gi, rep):
        base = derive_stream(seed, gi, rep).random()
        assert derive_stream(seed, gi, rep + 1).random() != base
        assert derive_stream(seed, gi + 1, rep).random() != base
        assert derive_stream(seed + 1, gi, rep).random() != base

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            derive_stream(-1, 0, 0)


class TestPlan:
    def test_round_trip(self):
        plan = ExperimentPlan.from_dict(SMALL)
        again = ExperimentPlan.from_dict({**plan.to_dict(), "seed": plan.master_seed})
        assert again == plan

    @pytest.mark.parametrize(
        "change,match",
        [
            ({"model": "cauchy"}, "unknown model"),
            ({"methods": ["pstar"]}, "not available"),
            ({"methods": []}, "no methods"),
            ({"replications": 10}, "at least 100"),
            ({"level": 1.0}, "level"),
            ({"n": 1}, "n must"),
            ({"seed": -3}, "nonnegative"),
            ({"grid": [-1.0, 1.0]}, "outside"),
            ({"grid": []}, "outside"),
        ],
    )
    def test_validation(self, change, match):
        with pytest.raises(ExperimentError, match=match):
            ExperimentPlan.from_dict({**SMALL, **change})

    def test_missing_seed(self):
        cfg = dict(SMALL)
        del cfg["seed"]
        with pytest.raises(ExperimentError, match="seed"):
            ExperimentPlan.from_dict(cfg)

    def test_bvn_grid_must_be_inside(self):
        with pytest.raises(ExperimentError):
            ExperimentPlan.from_dict({**SMALL, "model": "bvn-rho", "methods": ["fisher-z"], "grid": [1.0]})


class TestRun:
    @pytest.fixture(scope="class")
    @staticmethod
    def report():
        return run_experiment(ExperimentPlan.from_dict(SMALL), workers=1)

    def test_shape(self, report):
        assert len(report.rows) == 12
        assert {r.method for r in report.rows} == set(SMALL["methods"])
        assert [r.theta for r in report.rows[::4]] == SMALL["grid"]

    def test_exact_coverage_is_nominal(self, report):
        for theta in SMALL["grid"]:
            row = report.get(theta, "exact")
            assert abs(row.coverage - 0.9) <= 4 * row.coverage_se

    def test_scale_invariance(self, report):
        # the exponential model is a scale family; lengths scale with theta
        a, b = report.get(0.5, "exact"), report.get(2.0, "exact")
        assert b.mean_length / a.mean_length == pytest.approx(4.0, rel=0.1)

    def test_standard_errors(self, report):
        for r in report.rows:
            assert r.coverage_se == pytest.approx(math.sqrt(r.coverage * (1 - r.coverage) / 600))
            assert r.length_se > 0

    def test_get_missing(self, report):
        with pytest.raises(KeyError):
            report.get(0.5, "pstar")

    def test_worker_count_does_not_matter(self, report):
        parallel = run_experiment(ExperimentPlan.from_dict(SMALL), workers=2)
        assert parallel.rows == report.rows

    def test_export_bytes_identical(self, report, tmp_path):
        plan = ExperimentPlan.from_dict(SMALL)
        a = export_report(report, "csv", tmp_path / "a.csv")
        b = export_report(run_experiment(plan, workers=2), "csv", tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_env_worker_count(self, monkeypatch):
        monkeypatch.setenv("FIDKIT_THREADS", "many")
        with pytest.raises(ExperimentError):
            run_experiment(ExperimentPlan.from_dict(SMALL))


class TestExport:
    def test_csv_round_trip(self, tmp_path):
        rows = (CoverageRow(0.5, "exact", 0.9, 0.01, 1.2345678901234567, 0.001),)
        path = export_report(CoverageReport(rows, ExperimentPlan.from_dict(SMALL)), "csv", tmp_path / "r.csv")
        assert read_csv_report(path) == list(rows)
        meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
        assert meta["seed"] == 99
        assert meta["version"].startswith("v")

    def test_empty_report_is_header_only(self, tmp_path):
        path = export_report(CoverageReport(()), "csv", tmp_path / "e.csv")
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_json(self, tmp_path):
        rows = (CoverageRow(1.0, "exact", 0.9, 0.01, 1.0, 0.001),)
        path = export_report(CoverageReport(rows), "json", tmp_path / "r.json")
        doc = json.loads(path.read_text())
        assert doc["rows"][0]["method"] == "exact"
        assert "version" in doc["metadata"]

    def test_bad_format_and_path(self, tmp_path):
        with pytest.raises(ValueError):
            export_report(CoverageReport(()), "xml", tmp_path / "r.xml")
        with pytest.raises(OSError):
            export_report(CoverageReport(()), "csv", tmp_path / "missing" / "r.csv")

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_csv_report(p)

    def test_version_string(self):
        assert version_string().startswith("v0.1.0")


class TestAdapters:
    def test_hyperbola_exact_and_pstar_agree(self):
        data = MODELS["hyperbola"].simulate(0.3, 5, derive_stream(1, 0, 0))
        out = MODELS["hyperbola"].intervals(data, ("exact", "pstar"), 5, 0.9)
        assert out["pstar"] == pytest.approx(out["exact"], abs=1e-7)

    def test_hyperbola_exact_coverage(self):
        plan = ExperimentPlan("hyperbola", ("exact",), (0.0,), 5, 0.9, 500, 7)
        row = run_experiment(plan, workers=1).rows[0]
        assert abs(row.coverage - 0.9) <= 4 * row.coverage_se

    def test_bvn_adapter_returns_all_methods(self):
        adapter = MODELS["bvn-rho"]
        data = adapter.simulate(0.4, 15, derive_stream(1, 0, 0))
        out = adapter.intervals(data, sorted(adapter.methods), 15, 0.95)
        assert set(out) == set(adapter.methods)
        for lo, hi in out.values():
            assert lo < hi
