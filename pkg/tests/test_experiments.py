"""Tests for the experiment runners and their output files."""

import math
import os
import tempfile

import numpy as np
import pandas as pd
import pytest

from app.models.config import build_config
from app.models.errors import ParameterError, RangeError
from app.services.evt import hill
from app.services.experiments import (
    SummaryTable,
    hrv_checks,
    plateau_window,
    run_example31,
    run_hrv_figure,
    run_lemma_degree,
    run_replicates,
    run_table1,
)
from app.services.outputs import emit_outputs, emit_report
from app.services.samplers import Pareto, RngStream, experiment_stream, sample


def small_table1(**extra):
    values = {"experiment": "table1", "n": 2000, "replicates": 4, "alphas": [1.4],
              "k_list": [20, 50], "seed": 7}
    values.update(extra)
    return build_config(values)


def _pareto_alpha_hat(stream: RngStream) -> float:
    return hill(sample(Pareto(1.5), 5000, stream), 100).alpha_hat


def _runs_z(values) -> float:
    """Wald-Wolfowitz runs test above/below the median, normal approximation."""
    above = np.asarray(values) > np.median(values)
    n1, n2 = int(above.sum()), int((~above).sum())
    runs = 1 + int(np.count_nonzero(above[1:] != above[:-1]))
    mean = 2 * n1 * n2 / (n1 + n2) + 1
    var = 2 * n1 * n2 * (2 * n1 * n2 - n1 - n2) / ((n1 + n2) ** 2 * (n1 + n2 - 1))
    return (runs - mean) / math.sqrt(var)


@pytest.fixture(scope="module")
def table1_result():
    return run_table1(small_table1())


class TestTable1:

    def test_rows(self, table1_result):
        frame = table1_result.rows_frame()
        assert frame["k"].tolist() == [20, 50]
        assert (frame["replicates"] + frame["dropped"] == 4).all()

    def test_mse_dominates_squared_bias(self, table1_result):
        for row in table1_result.rows:
            assert row["mse"] >= row["bias"] ** 2 - 1e-12

    def test_same_result_for_any_worker_count(self, table1_result):
        parallel = run_table1(small_table1(parallelism=2))
        assert parallel.rows == table1_result.rows

    def test_alpha_one_is_flagged(self):
        table = run_table1(small_table1(alphas=[1.0], k_list=[20], replicates=2, n=1000))
        assert any("outside-theory" in note for note in table.notes)

    def test_k_beyond_n(self):
        with pytest.raises(RangeError):
            run_table1(small_table1(k_list=[5000]))

    def test_wrong_experiment(self):
        with pytest.raises(ParameterError):
            run_table1(build_config({"experiment": "lemma_degree"}))

    def test_best_k(self):
        table = SummaryTable("table1", rows=[
            {"alpha": 1.4, "k": 100, "bias": 0.05, "mse": 0.004, "replicates": 10, "dropped": 0},
            {"alpha": 1.4, "k": 200, "bias": -0.01, "mse": 0.006, "replicates": 10, "dropped": 0},
        ])
        best = table.best_k()
        assert best[best["criterion"] == "abs_bias"]["k"].tolist() == [200]
        assert best[best["criterion"] == "mse"]["k"].tolist() == [100]


class TestReplicatePool:

    def test_replicates_are_serially_independent(self):
        values = run_replicates(_pareto_alpha_hat, "runs-check", 3, 200)
        assert abs(_runs_z(values)) < 2.576

    def test_order_is_replicate_order(self):
        values = run_replicates(_pareto_alpha_hat, "order-check", 3, 5)
        again = [_pareto_alpha_hat(experiment_stream(3, "order-check", r)) for r in range(5)]
        assert values == again


class TestHrvFigure:

    @pytest.fixture(scope="class")
    def hrv_table(self):
        cfg = build_config({"experiment": "hrv_figure", "n": 3000, "replicates": 3,
                            "alpha0s": [1.3, 2.5], "k_list": [10, 20, 50], "seed": 5})
        return run_hrv_figure(cfg)

    def test_bands(self, hrv_table):
        frame = hrv_table.bands_frame()
        assert len(frame) == 12
        assert set(frame["orientation"]) == {"(xi,eta)", "(xi,-eta)"}
        assert (frame["q10"] <= frame["q25"]).all()
        assert (frame["q25"] <= frame["q75"]).all()
        assert (frame["q75"] <= frame["q90"]).all()
        assert (frame["replicates"] == 3).all()

    def test_notes_mention_detectability(self, hrv_table):
        assert any("detectable" in note for note in hrv_table.notes)

    def test_outputs(self, hrv_table):
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_outputs(hrv_table, tmp)
            names = {os.path.basename(p) for p in paths}
            assert "hillish_bands.csv" in names
            assert "hillish_alpha0_1.3.svg" in names
            assert "hillish_alpha0_2.5.svg" in names
            checks = pd.read_csv(os.path.join(tmp, "hillish_checks.csv"))
            assert list(checks.columns) == ["family", "orientation", "expectation", "lo", "hi",
                                            "window_lo", "window_hi", "holds"]
            assert len(checks) == 4
            bands = pd.read_csv(os.path.join(tmp, "hillish_bands.csv"))
            assert list(bands.columns) == ["family", "orientation", "k", "mean", "q10", "q25",
                                           "q75", "q90", "replicates"]

    def test_plateau_window(self):
        frame = pd.DataFrame({
            "family": "f", "orientation": "o",
            "k": [100, 200, 300, 400, 500, 600],
            "mean": [1.5, 0.95, 1.0, 1.05, 1.1, 1.4],
        })
        assert plateau_window(frame, "f", "o", 0.85, 1.15) == (200, 500)
        assert plateau_window(frame, "f", "o", 0.85, 1.15, min_width=400) is None

    def test_checks_cover_both_families(self, hrv_table):
        checks = hrv_table.checks_frame()
        assert len(checks) == 4
        detectable = checks[checks["family"] == "alpha0=1.3"]
        undetectable = checks[checks["family"] == "alpha0=2.5"]
        assert set(detectable["expectation"]) == {"plateau"}
        assert set(undetectable["expectation"]) == {"no_plateau"}
        assert detectable[["lo", "hi"]].drop_duplicates().values.tolist() == [[0.85, 1.15]]
        assert undetectable[["lo", "hi"]].drop_duplicates().values.tolist() == [[0.9, 1.1]]
        # k <= 50 cannot hold a window 200 wide
        assert not detectable["holds"].any()
        assert undetectable["holds"].all()
        assert not hrv_table.passed
        assert any(note.startswith("FAILED") for note in hrv_table.notes)

    @staticmethod
    def _bands(family, means, ks):
        rows = [{"family": family, "orientation": o, "k": k, "mean": m}
                for o in ("(xi,eta)", "(xi,-eta)") for k, m in zip(ks, means)]
        return pd.DataFrame(rows)

    def test_undetectable_family_settling_near_one_fails(self):
        ks = list(range(60, 401, 20))
        frame = self._bands("alpha0=2.5", [1.0] * len(ks), ks)
        checks = hrv_checks(frame, "alpha0=2.5", detectable=False)
        assert [c["holds"] for c in checks] == [False, False]
        assert (checks[0]["window_lo"], checks[0]["window_hi"]) == (60, 400)

    def test_undetectable_family_away_from_one_holds(self):
        ks = list(range(60, 401, 20))
        frame = self._bands("alpha0=2.5", [1.3] * len(ks), ks)
        checks = hrv_checks(frame, "alpha0=2.5", detectable=False)
        assert all(c["holds"] for c in checks)
        assert checks[0]["window_lo"] is None

    def test_detectable_family_needs_plateau(self):
        ks = list(range(100, 1001, 100))
        flat = hrv_checks(self._bands("alpha0=1.3", [1.1] * len(ks), ks), "alpha0=1.3", detectable=True)
        assert all(c["holds"] for c in flat)
        drifting = hrv_checks(self._bands("alpha0=1.3", [0.5 + 0.2 * i for i in range(len(ks))], ks),
                              "alpha0=1.3", detectable=True)
        assert not any(c["holds"] for c in drifting)

    def test_table_without_checks_passes(self, table1_result):
        assert table1_result.checks == []
        assert table1_result.passed


class TestOutputs:

    def test_empty_table_writes_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            emit_outputs(SummaryTable("table1"), tmp)
            with open(os.path.join(tmp, "table1.csv")) as fh:
                assert fh.read() == "alpha,k,bias,mse,replicates\n"

    def test_rerun_is_byte_identical(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            emit_outputs(run_table1(small_table1()), a)
            emit_outputs(run_table1(small_table1()), b)
            for name in ("table1.csv", "table1_best.csv"):
                with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
                    assert fa.read() == fb.read()

    def test_table1_columns(self, table1_result):
        with tempfile.TemporaryDirectory() as tmp:
            emit_outputs(table1_result, tmp)
            frame = pd.read_csv(os.path.join(tmp, "table1.csv"))
            assert list(frame.columns) == ["alpha", "k", "bias", "mse", "replicates"]
            assert os.path.exists(os.path.join(tmp, "table1_bias.svg"))


class TestLemmaDegree:

    @pytest.fixture(scope="class")
    def report(self):
        cfg = build_config({"experiment": "lemma_degree", "n": 300, "replicates": 300,
                            "asymptotic_replicates": 3000, "grid_max": 2, "seed": 4})
        return run_lemma_degree(cfg)

    def test_report(self, report):
        assert len(report.rows) == 9
        assert sum(r["p_graph"] for r in report.rows) <= 1.0 + 1e-12
        assert all(0.0 <= r["p_limit"] <= 1.0 for r in report.rows)
        assert report.rows[0]["m"] == "0,0"
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_report(report, tmp, "lemma_degree")
            assert [os.path.basename(p) for p in paths] == ["lemma_degree.csv", "lemma_degree.txt"]

    def test_graph_law_matches_limit(self, report):
        """With identity layers node 0 has exactly Poisson(W_0l) degrees, so every cell agrees."""
        assert report.passed
        assert max(r["abs_diff"] for r in report.rows) < 0.1


class TestExample31:

    @pytest.fixture(scope="class")
    def report(self):
        cfg = build_config({"experiment": "example31", "n": 1_000_000, "replicates": 1, "alpha": 1.0,
                            "k_list": [1000], "u_grid": [1.0], "v_grid": [0.0, 1e9], "seed": 9})
        return run_example31(cfg)

    def test_limit_at_origin(self, report):
        at_zero = [r for r in report.rows if r["check"] == "limit" and r["v"] == 0.0][0]
        assert at_zero["target"] == pytest.approx(1.0, abs=1e-8)
        assert abs(at_zero["estimate"] - 1.0) <= 3 * at_zero["se"]
        assert at_zero["holds"]

    def test_limit_at_large_ratio(self, report):
        at_large = [r for r in report.rows if r["check"] == "limit" and r["v"] == 1e9][0]
        assert at_large["estimate"] == 0.0
        assert at_large["target"] < 1e-12
        assert at_large["holds"]

    def test_hill_on_distance(self, report):
        rows = [r for r in report.rows if r["check"] == "hill_distance"]
        assert len(rows) == 1
        assert rows[0]["target"] == 2.0
        assert abs(rows[0]["estimate"] - 2.0) <= 0.3
        assert rows[0]["holds"]
        assert report.passed

    def test_rejects_nonpositive_u(self):
        cfg = build_config({"experiment": "example31", "n": 1000, "k_list": [10], "u_grid": [0.0]})
        with pytest.raises(ParameterError):
            run_example31(cfg)
