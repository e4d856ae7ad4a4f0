import json

import numpy as np
import pytest

from lsdd import load_csv, save_csv
from lsdd.cli import main

GRID = ["--sigma-grid", "0.3,0.8,2.0", "--lambda-grid", "0.01,0.1"]


@pytest.fixture
def sample_files(tmp_path):
    rng = np.random.default_rng(0)
    x_path = tmp_path / "x.csv"
    xp_path = tmp_path / "xp.csv"
    save_csv(x_path, rng.normal(0.5, 1.0, size=(30, 1)))
    save_csv(xp_path, rng.normal(0.0, 1.0, size=(30, 1)))
    return str(x_path), str(xp_path)


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["no-such-command"]) == 1
        assert main([]) == 1

    def test_help_is_zero(self, capsys):
        assert main(["--help"]) == 0

    def test_missing_file_is_two(self, tmp_path, capsys):
        code = main(["l2", "--x", str(tmp_path / "nope.csv"), "--x-prime", str(tmp_path / "nope.csv")])
        assert code == 2

    def test_malformed_csv_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0\n1.0,2.0\n")
        code = main(["l2", "--x", str(bad), "--x-prime", str(bad)])
        assert code == 2

    def test_bad_flag_combination_is_one(self, sample_files, capsys):
        x, xp = sample_files
        code = main(["l2", "--x", x, "--x-prime", xp, "--sigma-grid", "0.5"])
        assert code == 1


class TestL2Command:
    def test_json_output(self, sample_files, tmp_path, capsys):
        x, xp = sample_files
        out = tmp_path / "l2.json"
        code = main(["l2", "--x", x, "--x-prime", xp, "--output", str(out), *GRID])
        assert code == 0
        document = json.loads(out.read_text())
        for key in ("plain_h", "plain_quadratic", "combined", "bias_corrected",
                    "positive_part", "gram_condition", "selected_sigma", "selected_lambda"):
            assert key in document
        assert document["combined"] >= document["plain_h"] >= document["plain_quadratic"]

    def test_csv_output(self, sample_files, tmp_path, capsys):
        x, xp = sample_files
        out = tmp_path / "l2.csv"
        code = main(["l2", "--x", x, "--x-prime", xp, "--output", str(out),
                     "--format", "csv", *GRID])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "estimator,value"
        assert len(lines) == 7

    def test_deterministic_given_seed(self, sample_files, tmp_path, capsys):
        x, xp = sample_files
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["l2", "--x", x, "--x-prime", xp, "--output", str(a), "--seed", "5", *GRID])
        main(["l2", "--x", x, "--x-prime", xp, "--output", str(b), "--seed", "5", *GRID])
        assert a.read_bytes() == b.read_bytes()


class TestFitCommand:
    def test_fit_reports_selection_and_predictions(self, sample_files, tmp_path, capsys):
        x, xp = sample_files
        out = tmp_path / "fit.json"
        code = main(["fit", "--x", x, "--x-prime", xp, "--eval-at", x,
                     "--output", str(out), *GRID])
        assert code == 0
        document = json.loads(out.read_text())
        assert document["selected_sigma"] in (0.3, 0.8, 2.0)
        assert document["selected_lambda"] in (0.01, 0.1)
        assert len(document["cv_scores"]) == 6
        assert len(document["predictions"]) == 30


class TestTestCommand:
    def test_lsdd_statistic(self, sample_files, tmp_path, capsys):
        x, xp = sample_files
        out = tmp_path / "test.json"
        code = main(["test", "--x", x, "--x-prime", xp, "--permutations", "9",
                     "--output", str(out), "--max-centers", "30", *GRID])
        assert code == 0
        document = json.loads(out.read_text())
        assert document["n_permutations"] == 9
        assert 0.1 <= document["p_value"] <= 1.0
        assert document["reject"] == (document["p_value"] <= 0.05)


class TestSynthCommand:
    def test_gaussian_shift_files(self, tmp_path, capsys):
        stem = tmp_path / "gs"
        code = main(["synth", "gaussian-shift", "--d", "2", "--n", "15",
                     "--n-prime", "10", "--mu", "0.5", "--output", str(stem)])
        assert code == 0
        x = load_csv(f"{stem}_x.csv")
        xp = load_csv(f"{stem}_x_prime.csv")
        assert x.n == 15 and x.dim == 2 and xp.n == 10

    def test_step_series_file(self, tmp_path, capsys):
        stem = tmp_path / "ss"
        code = main(["synth", "step-series", "--length", "120",
                     "--change-times", "60", "--output", str(stem)])
        assert code == 0
        assert load_csv(f"{stem}_series.csv").n == 120

    def test_class_balance_files(self, tmp_path, capsys):
        stem = tmp_path / "cb"
        code = main(["synth", "class-balance", "--d", "2", "--n-labeled", "8",
                     "--n-test", "12", "--pi-star", "0.5", "--output", str(stem)])
        assert code == 0
        assert load_csv(f"{stem}_positives.csv").n == 8
        assert load_csv(f"{stem}_test.csv").n == 12
        assert load_csv(f"{stem}_labels.csv").n == 12

    def test_missing_output_is_usage_error(self, capsys):
        assert main(["synth", "gaussian-shift"]) == 1


class TestClassBalanceCommand:
    def test_estimates_balance(self, tmp_path, capsys):
        stem = tmp_path / "cb"
        main(["synth", "class-balance", "--d", "2", "--n-labeled", "15",
              "--n-test", "40", "--pi-star", "0.8", "--separation", "4.0",
              "--output", str(stem)])
        out = tmp_path / "balance.json"
        code = main(["class-balance", "--positives", f"{stem}_positives.csv",
                     "--negatives", f"{stem}_negatives.csv", "--test", f"{stem}_test.csv",
                     "--pi-points", "21", "--output", str(out), *GRID])
        assert code == 0
        document = json.loads(out.read_text())
        assert 0.5 <= document["pi_hat"] <= 1.0
        assert len(document["curve"]) == 21


class TestChangeDetectCommand:
    def test_scores_and_peaks(self, tmp_path, capsys):
        stem = tmp_path / "ss"
        main(["synth", "step-series", "--length", "160", "--change-times", "80",
              "--shift", "2.5", "--output", str(stem)])
        out = tmp_path / "scores.json"
        code = main(["change-detect", "--series", f"{stem}_series.csv",
                     "--k", "2", "--r", "20", "--stride", "10", "--top", "2",
                     "--output", str(out)])
        assert code == 0
        document = json.loads(out.read_text())
        assert document["times"][0] == 20
        assert len(document["times"]) == len(document["scores"])
        assert all(t in document["times"] for t in document["top_change_points"])


class TestExperimentCommand:
    def test_named_experiment_runs(self, capsys):
        code = main(["experiment", "l2-curve", "--replicates", "1", "--seed", "2", *GRID])
        assert code == 0
        printed = capsys.readouterr().out
        assert "lsdd_combined" in printed

    def test_config_file(self, tmp_path, capsys):
        config = {
            "experiment": "l2-curve", "replicates": 1, "seed": 4, "n": 30,
            "n_prime": 30, "mu": [0.2], "sigmas": [0.3, 1.0], "lambdas": [0.01, 0.1],
            "max_centers": 40,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "results"
        code = main(["experiment", "--config", str(path), "--output", str(out)])
        assert code == 0
        assert (tmp_path / "results.csv").exists()
        assert (tmp_path / "results.json").exists()

    def test_unknown_name_is_usage_error(self, capsys):
        assert main(["experiment", "bogus"]) == 1
