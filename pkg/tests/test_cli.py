"""Tests for the mirg command line."""

import json
import os
import tempfile

import pandas as pd
import pytest

from app.cli import build_parser, main


@pytest.fixture
def workdir():
    with tempfile.TemporaryDirectory() as tmp:
        yield tmp


@pytest.fixture
def generated(workdir):
    code = main(["generate", "--model", "single", "--alpha", "1.5", "--n", "300", "--seed", "3",
                 "--out", workdir])
    assert code == 0
    return workdir


class TestGenerate:

    def test_writes_three_files(self, generated):
        for name in ("weights.csv", "edges.tsv", "degrees.csv"):
            assert os.path.exists(os.path.join(generated, name))

    def test_hrv_needs_alpha0(self, workdir, capsys):
        code = main(["generate", "--model", "hrv", "--n", "50", "--out", workdir])
        assert code == 2
        assert "error [parameter]" in capsys.readouterr().err

    def test_full_dependence(self, workdir):
        assert main(["generate", "--model", "full", "--alpha", "1.0", "--n", "100", "--out", workdir]) == 0

    def test_worker_count_does_not_change_graph(self, workdir):
        outputs = []
        for workers in ("1", "2"):
            out = os.path.join(workdir, f"w{workers}")
            code = main(["generate", "--n", "400", "--seed", "2", "--chunk-size", "100",
                         "--workers", workers, "--out", out])
            assert code == 0
            with open(os.path.join(out, "edges.tsv"), "rb") as fh:
                outputs.append(fh.read())
        assert outputs[0] == outputs[1]


class TestDegreesAndEstimators:

    def test_degrees_from_edges(self, generated):
        out = os.path.join(generated, "again")
        code = main(["degrees", "--edges", os.path.join(generated, "edges.tsv"), "--n", "300", "--L", "2",
                     "--out", out])
        assert code == 0
        original = pd.read_csv(os.path.join(generated, "degrees.csv"))
        rebuilt = pd.read_csv(os.path.join(out, "degrees.csv"))
        assert original.equals(rebuilt)

    def test_hill(self, generated, capsys):
        code = main(["hill", "--degrees", os.path.join(generated, "degrees.csv"), "--k", "10,20",
                     "--out", generated])
        assert code == 0
        frame = pd.read_csv(os.path.join(generated, "hill.csv"))
        assert frame["k"].tolist() == [10, 20]
        assert "alpha_hat" in capsys.readouterr().out

    def test_hillish(self, generated):
        code = main(["hillish", "--degrees", os.path.join(generated, "degrees.csv"), "--k", "5,10",
                     "--out", generated])
        assert code == 0
        frame = pd.read_csv(os.path.join(generated, "hillish.csv"))
        assert list(frame.columns) == ["k", "hillish_pos", "hillish_neg"]

    def test_k_out_of_range(self, generated, capsys):
        code = main(["hill", "--degrees", os.path.join(generated, "degrees.csv"), "--k", "300"])
        assert code == 2
        assert "error [range]" in capsys.readouterr().err

    def test_hill_needs_k_or_kappa(self, generated):
        assert main(["hill", "--degrees", os.path.join(generated, "degrees.csv")]) == 2

    def test_missing_file(self, workdir, capsys):
        code = main(["hill", "--degrees", os.path.join(workdir, "missing.csv"), "--k", "10"])
        assert code == 5
        assert "error [io]" in capsys.readouterr().err


class TestExperimentAndVerify:

    def test_table1_from_config(self, workdir):
        config = os.path.join(workdir, "table1.json")
        with open(config, "w") as fh:
            json.dump({"experiment": "table1", "n": 1000, "replicates": 2, "alphas": [1.5],
                       "k_list": [10, 20]}, fh)
        out = os.path.join(workdir, "out")
        code = main(["experiment", "table1", "--config", config, "--out", out, "--seed", "1"])
        assert code == 0
        frame = pd.read_csv(os.path.join(out, "table1.csv"))
        assert frame["k"].tolist() == [10, 20]
        assert os.path.exists(os.path.join(out, "table1_best.csv"))

    def test_failed_checks_exit_nonzero(self, workdir):
        config = os.path.join(workdir, "hrv.json")
        with open(config, "w") as fh:
            json.dump({"experiment": "hrv_figure", "n": 2000, "replicates": 2, "alpha0s": [1.3],
                       "k_list": [10, 20]}, fh)
        out = os.path.join(workdir, "out")
        # k <= 20 leaves no room for a plateau window, so the detectable check fails
        assert main(["experiment", "hrv", "--config", config, "--out", out, "--seed", "1"]) == 1
        checks = pd.read_csv(os.path.join(out, "hillish_checks.csv"))
        assert not checks["holds"].any()

    @pytest.mark.parametrize("flag", ["--paper-scale", "--full-scale"])
    def test_full_size_flag(self, flag):
        args = build_parser().parse_args(["experiment", "table1", flag])
        assert args.paper_scale is True
        assert build_parser().parse_args(["experiment", "table1"]).paper_scale is False

    def test_chunk_size_override(self):
        args = build_parser().parse_args(["experiment", "table1", "--chunk-size", "500"])
        assert args.chunk_size == 500

    def test_bad_config_key(self, workdir, capsys):
        config = os.path.join(workdir, "bad.json")
        with open(config, "w") as fh:
            json.dump({"experiment": "table1", "n_nodes": 10}, fh)
        code = main(["experiment", "table1", "--config", config])
        assert code == 2
        assert "error [config]" in capsys.readouterr().err

    def test_verify_pb3(self, workdir):
        assert main(["verify", "pb3", "--out", workdir]) == 0
        assert os.path.exists(os.path.join(workdir, "verify_pb3.csv"))

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
