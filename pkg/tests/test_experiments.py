import csv
import io
import json
import math

import numpy as np
import pytest

from cvarbounds import distributions as dist
from cvarbounds.concentration import ecdf_cvar_bounds, order_stat_lower_bound, order_stat_upper_bound
from cvarbounds.bounds import SupportBounds
from cvarbounds.experiments import (COLUMNS, ExperimentConfig, ResultRow, coverage_summary, run,
                                    run_cell, run_coincidence, run_coverage,
                                    run_surrogate_convergence, run_timing, rows_to_csv,
                                    write_results)
from cvarbounds.riskcore import SampleBatch

FAST = dict(true_cvar_nodes=100_001)


def cfg(name, **kw):
    return ExperimentConfig(name, **{**FAST, **kw})


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(repetitions=0), dict(n_grid=()), dict(n_grid=(0,)), dict(alpha=0.0), dict(delta=1.0),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig("coverage", **kw)

    def test_coincidence_delta_range(self):
        with pytest.raises(ValueError):
            ExperimentConfig("coincidence", delta=0.6)
        ExperimentConfig("coincidence", delta=0.5)

    def test_unknown(self):
        with pytest.raises(ValueError):
            ExperimentConfig("plots")

    def test_surrogate_needs_pair(self):
        with pytest.raises(ValueError):
            ExperimentConfig("surrogate_convergence", distributions=(dist.five_component_gmm(),))

    def test_defaults(self):
        c = ExperimentConfig("surrogate_convergence")
        assert c.alpha == 0.2 and c.delta == 0.05 and c.repetitions == 100
        assert c.n_grid == (100, 1000, 10_000)
        assert c.distributions == (dist.five_component_gmm(), dist.moment_matched_normal(dist.five_component_gmm()))

    def test_json_round_trip(self):
        c = cfg("coincidence", n_grid=(10, 20), b_truncation=20.0)
        assert ExperimentConfig.from_json(json.loads(json.dumps(c.to_json()))) == c

    def test_row_invariant(self):
        with pytest.raises(ValueError):
            ResultRow("x", "d", 1, 0, 1, "k", lower=2.0, upper=1.0)


class TestSurrogate:
    def test_one_row_per_kind_and_deterministic(self):
        c = cfg("surrogate_convergence", n_grid=(100,), repetitions=1, master_seed=9)
        rows = run_surrogate_convergence(c)
        assert sorted(r.bound_kind for r in rows) == ["surrogate_bounds", "target_estimate"]
        assert rows == run_surrogate_convergence(c)
        assert all(r.seed is not None and r.true_value is not None for r in rows)

    def test_row_count_and_order(self):
        c = cfg("surrogate_convergence", n_grid=(50, 20), repetitions=3)
        rows = run(c)
        assert len(rows) == 2 * 3 * 2
        keys = [(r.n, r.repetition) for r in rows]
        assert keys == sorted(keys)

    def test_replay_single_cell(self):
        c = cfg("surrogate_convergence", n_grid=(30, 60), repetitions=3, master_seed=4)
        rows = run(c)
        again = run_cell(c, 0, 60, 2)
        assert again == [r for r in rows if r.n == 60 and r.repetition == 2]

    def test_zero_discrepancy_width_rate(self):
        g = dist.five_component_gmm()
        c = cfg("surrogate_convergence", distributions=(g, g), eps_model=0.0,
                n_grid=(1000, 4000, 16000, 64000), repetitions=3)
        rows = [r for r in run(c) if r.bound_kind == "surrogate_bounds"]
        widths = [np.mean([r.upper - r.lower for r in rows if r.n == n]) for n in c.n_grid]
        slope = np.polyfit(np.log(c.n_grid), np.log(widths), 1)[0]
        assert -0.6 < slope < -0.4

    def test_parallel_matches_serial(self):
        c = cfg("surrogate_convergence", n_grid=(40, 80), repetitions=2)
        par = ExperimentConfig.from_json({**c.to_json(), "workers": 2})
        assert run(c) == run(par)


class TestTiming:
    def test_positive(self):
        rows = run_timing(cfg("timing", n_grid=(10,), repetitions=1, timing_inner=3))
        assert len(rows) == 6
        timed = {"sample_target", "sample_surrogate", "pipeline_target", "pipeline_surrogate"}
        assert all(r.wall_ns > 0 for r in rows if r.bound_kind in timed)
        assert {r.bound_kind for r in rows} == timed | {"sampling_ratio", "pipeline_ratio"}
        assert all(r.ratio > 0 for r in rows if r.bound_kind.endswith("ratio"))


class TestCoincidence:
    def test_beta_gap(self):
        rows = run_coincidence(cfg("coincidence", distributions=(dist.beta(2, 2),), n_grid=(100,), repetitions=20))
        assert len(rows) == 2 * 20
        assert max(r.gap for r in rows) <= 1e-9

    def test_laplace_needs_truncation(self):
        c = cfg("coincidence", distributions=(dist.laplace(),), n_grid=(10,), repetitions=2)
        rows = run_coincidence(c)
        assert all(r.gap is None and r.note.startswith("skipped") for r in rows)
        rows = run_coincidence(cfg("coincidence", distributions=(dist.laplace(),), n_grid=(10,),
                                   repetitions=2, a_truncation=-20.0, b_truncation=20.0))
        assert all(r.gap is not None and r.gap <= 1e-9 for r in rows)

    def test_degenerate_batch(self):
        b = SampleBatch([0.4] * 50)
        r = ecdf_cvar_bounds(b, 0.2, 0.05, SupportBounds.common(0.4, 0.4))
        assert order_stat_upper_bound(b, 0.2, 0.05, 0.4) == r.upper == pytest.approx(0.4)
        assert order_stat_lower_bound(b, 0.2, 0.05, 0.4) == pytest.approx(r.lower)


class TestCoverage:
    def test_single_row(self):
        rows = run_coverage(cfg("coverage", n_grid=(100,), repetitions=1))
        assert len(rows) == 1 and isinstance(rows[0].covered, bool)

    def test_loose_delta(self):
        rows = run_coverage(cfg("coverage", n_grid=(10,), repetitions=200, delta=0.5))
        s = coverage_summary(rows)
        slack = 3 * math.sqrt(0.25 / 200)
        assert s["upper_violation_rate"] <= 0.5 + slack
        assert s["lower_violation_rate"] <= 0.5 + slack
        assert s["repetitions"] == 200


class TestOutput:
    def test_byte_identical(self, tmp_path):
        c = cfg("coverage", n_grid=(20,), repetitions=5)
        for sub in ("a", "b"):
            write_results(c, run(c), tmp_path / sub / "out.csv")
        for suffix in ("", ".manifest.json"):
            a = (tmp_path / "a" / f"out.csv{suffix}").read_bytes()
            assert a == (tmp_path / "b" / f"out.csv{suffix}").read_bytes()
        assert (tmp_path / "a" / "out.csv.meta.json").exists()

    def test_csv_and_manifest(self, tmp_path):
        c = cfg("coincidence", distributions=(dist.beta(2, 5),), n_grid=(10,), repetitions=2)
        rows = run(c)
        manifest = write_results(c, rows, tmp_path / "o.csv")
        table = list(csv.DictReader(io.StringIO((tmp_path / "o.csv").read_text())))
        assert len(table) == manifest["row_count"] == 4
        assert tuple(table[0]) == COLUMNS
        assert float(table[0]["upper"]) == rows[0].upper  # repr round-trips exactly
        assert manifest["schema_version"] == "1" and manifest["config"]["experiment"] == "coincidence"
        assert "finished_unix" not in manifest

    def test_csv_nulls(self):
        text = rows_to_csv([ResultRow("e", "d", 3, 0, None, "k", covered=False)])
        assert text.splitlines()[1] == "e,d,3,0,,k,,,,,,,,,,false,"
