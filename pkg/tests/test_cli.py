"""Command-line surface: schemas, happy paths, and exit codes."""

import json

import numpy as np
import pytest

from rerand.cli import main

from conftest import random_population


@pytest.fixture
def covariate_csv(tmp_path, rng):
    x = rng.standard_normal((30, 2))
    path = tmp_path / "cov.csv"
    lines = ["x1,x2"] + [f"{a},{b}" for a, b in x]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def trial_csv(tmp_path, rng):
    n = 40
    w = rng.standard_normal((n, 2))
    x = rng.standard_normal((n, 1))
    z = np.zeros(n, dtype=int)
    z[rng.choice(n, 20, replace=False)] = 1
    y = 2.0 * z + w @ np.array([1.0, -0.5]) + x[:, 0] + rng.standard_normal(n)
    path = tmp_path / "trial.csv"
    lines = ["y,z,w1,w2,x1"]
    for i in range(n):
        lines.append(f"{y[i]},{z[i]},{w[i,0]},{w[i,1]},{x[i,0]}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def population_csv(tmp_path, rng):
    pop = random_population(rng, n=30, k=1, j=2)
    path = tmp_path / "pop.csv"
    lines = ["y1,y0,x1,w1,w2"]
    for i in range(30):
        lines.append(",".join(repr(float(v)) for v in
                              [pop.y1[i], pop.y0[i], pop.x[i, 0],
                               pop.w[i, 0], pop.w[i, 1]]))
    path.write_text("\n".join(lines) + "\n")
    return path


class TestDesignCommand:
    def test_emits_assignment_and_record(self, covariate_csv, tmp_path, capsys):
        out = tmp_path / "assign.csv"
        code = main(["design", "--data", str(covariate_csv),
                     "--x-cols", "x1,x2", "--n1", "15",
                     "--threshold-quantile", "0.5", "--seed", "3",
                     "--out", str(out)])
        assert code == 0
        record = json.loads(capsys.readouterr().out)
        assert set(record) == {"M", "attempts", "a", "seed"}
        assert record["M"] <= record["a"]
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "unit,z"
        zvals = [int(l.split(",")[1]) for l in lines[1:]]
        assert sum(zvals) == 15 and len(zvals) == 30

    def test_rejection_cap_exit_code(self, covariate_csv):
        code = main(["design", "--data", str(covariate_csv),
                     "--x-cols", "x1,x2", "--n1", "15",
                     "--threshold", "1e-14", "--max-attempts", "25"])
        assert code == 3

    def test_missing_column_exit_code(self, covariate_csv):
        code = main(["design", "--data", str(covariate_csv),
                     "--x-cols", "nope", "--n1", "15"])
        assert code == 2

    def test_empty_csv_exit_code(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code = main(["design", "--data", str(empty),
                     "--x-cols", "x1", "--n1", "3"])
        assert code == 2


class TestAnalyzeCommand:
    def test_lin_report_schema(self, trial_csv, capsys):
        code = main(["analyze", "--data", str(trial_csv), "--outcome", "y",
                     "--treat", "z", "--w-cols", "w1,w2", "--estimator",
                     "lin", "--alpha", "0.05"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert set(rep) == {"tau_hat", "v_hat", "v_hw", "r2_hat_x", "ci",
                            "method", "estimator"}
        assert rep["method"] == "NoKnowledge"
        assert rep["ci"]["lower"] < rep["tau_hat"] < rep["ci"]["upper"]
        assert 1.0 < rep["tau_hat"] < 3.0

    def test_full_knowledge_interval(self, trial_csv, capsys):
        code = main(["analyze", "--data", str(trial_csv), "--outcome", "y",
                     "--treat", "z", "--w-cols", "w1,w2", "--x-cols", "x1",
                     "--estimator", "diff", "--design-a", "0.5"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["method"] == "FullKnowledge"
        assert rep["ci"]["a"] == 0.5

    def test_custom_betas(self, trial_csv, capsys):
        code = main(["analyze", "--data", str(trial_csv), "--outcome", "y",
                     "--treat", "z", "--w-cols", "w1,w2",
                     "--estimator", "custom", "--beta1", "1.0,-0.5",
                     "--beta0", "1.0,-0.5"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["estimator"] == "custom"

    def test_custom_requires_betas(self, trial_csv):
        assert main(["analyze", "--data", str(trial_csv), "--outcome", "y",
                     "--treat", "z", "--w-cols", "w1,w2",
                     "--estimator", "custom"]) == 2


class TestAsymptoticsCommand:
    def test_report_fields(self, population_csv, capsys):
        code = main(["asymptotics", "--data", str(population_csv),
                     "--n1", "15", "--threshold-quantile", "0.2"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        for key in ("tau", "v_tautau", "r2_tau_x", "r2_tau_w", "gains",
                    "adjustment_helps", "v_k_a", "min_variance_gamma"):
            assert key in rep
        assert rep["n"] == 30


class TestSimulateCommand:
    def test_flag_mode_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["simulate", "--model", "example1", "--n", "80",
                     "--rho", "0.5", "--design", "rem",
                     "--threshold-quantile", "0.3",
                     "--estimators", "diff,lin", "--reps", "50",
                     "--seed", "9", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["reps"] == 50
        assert (out / "histograms.csv").read_text().startswith(
            "estimator,bin_left,bin_right,count")

    def test_config_mode(self, tmp_path, capsys):
        cfg = {
            "model": {"type": "example1", "n": 60, "rho": 0.0},
            "design": {"kind": "cre", "n1": 30},
            "estimators": [{"kind": "diff", "covs": "none"}],
            "reps": 25,
            "master_seed": 2,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = main(["simulate", "--config", str(path)])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["estimators"]["diff"]["hist_counts"] is not None

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"type": "unknown"}}))
        assert main(["simulate", "--config", str(path)]) == 2

    def test_rejection_abort_exit_code(self, tmp_path):
        cfg = {
            "model": {"type": "example1", "n": 60, "rho": 0.0},
            "design": {"kind": "rem", "n1": 30, "a": 1e-14,
                       "max_attempts": 30},
            "estimators": [{"kind": "diff", "covs": "none"}],
            "reps": 10,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["simulate", "--config", str(path)]) == 3

    def test_unknown_estimator_token(self):
        assert main(["simulate", "--model", "example1", "--n", "40",
                     "--rho", "0.0", "--estimators", "bogus",
                     "--reps", "5"]) == 2
