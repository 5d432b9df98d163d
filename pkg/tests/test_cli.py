import json

import pytest

from src.cli import main
from src.costmodel import PredictionRow, PredictionTable
from src.utility import read_csv

from conftest import TINY_CONFIG, dist


def run(tmp_path, *argv):
    return main(["--out", str(tmp_path), "-q", *argv])


def write_predictions(path):
    rows = [PredictionRow(0, 0, dist(0.4, 0.3, 0.1)), PredictionRow(0, 1, dist(0.5, 0.0, 0.01)),
            PredictionRow(3, 0, dist(0.2, 0.0, 0.0)), PredictionRow(3, 1, dist(0.2, 0.5, 0.5))]
    PredictionTable(rows).write_csv(str(path), seed=1)


class TestAnalyticCommands:
    def test_table1(self, tmp_path):
        assert run(tmp_path, "table1") == 0
        rows = read_csv(str(tmp_path / "table1.csv"))
        assert [r["scenario"] for r in rows] == ["a", "b", "c", "d"]
        assert float(rows[0]["risk"]) == pytest.approx(0.0786, abs=5e-5)
        # exact normal cdf; the commonly quoted 31.6% and 36.3% come from z rounded to two places
        risks = {r["scenario"]: float(r["risk"]) for r in rows}
        assert risks["b"] == pytest.approx(0.3138, abs=5e-5)
        assert risks["c"] == pytest.approx(risks["b"], abs=1e-12)
        assert risks["d"] == pytest.approx(0.3618, abs=5e-5)
        assert abs(risks["b"] - 0.316) <= 0.003

    def test_decompose(self, tmp_path):
        assert run(tmp_path, "decompose", "--pcf", "2,0.5,1,0.3,0,5,1") == 0
        for row in read_csv(str(tmp_path / "decompose.csv")):
            assert float(row["relative_difference"]) <= 0.02

    def test_decompose_wrong_arity(self, tmp_path):
        assert run(tmp_path, "decompose", "--pcf", "1,2,3") == 1

    def test_decompose_invalid_pcf(self, tmp_path):
        assert run(tmp_path, "decompose", "--pcf", "2,0.5,1,0.3,0.9,5,1", "--samples", "10000") == 1


class TestUsage:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 1

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as err:
            main(["table1", "--colour"])
        assert err.value.code == 1

    def test_missing_workload_is_a_runtime_failure(self, tmp_path):
        assert run(tmp_path, "train") == 2

    def test_invalid_config(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"generator": {"n_queries": 10, "catalog_size": 2}}))
        assert run(tmp_path, "--config", str(config), "generate") == 1

    def test_select_needs_strategy(self, tmp_path):
        write_predictions(tmp_path / "predictions.csv")
        assert run(tmp_path, "select") == 1


class TestSelect:
    def test_zero_weight_conservative_equals_base(self, tmp_path):
        predictions = tmp_path / "predictions.csv"
        write_predictions(predictions)
        assert run(tmp_path / "base", "select", "--strategy", "base", "--predictions", str(predictions)) == 0
        assert run(tmp_path / "cons", "select", "--strategy", "cons", "--f-s", "0",
                   "--predictions", str(predictions)) == 0
        base = (tmp_path / "base" / "selection.csv").read_bytes()
        assert base == (tmp_path / "cons" / "selection.csv").read_bytes()
        assert [r["plan_id"] for r in read_csv(str(tmp_path / "base" / "selection.csv"))] == ["0", "0"]

    def test_risk_pruning(self, tmp_path):
        predictions = tmp_path / "predictions.csv"
        write_predictions(predictions)
        assert run(tmp_path, "select", "--strategy", "risk_prun", "--f-er", "0.25", "--f-pr", "0.25",
                   "--predictions", str(predictions)) == 0
        rows = read_csv(str(tmp_path / "selection.csv"))
        assert [(r["query_id"], r["plan_id"]) for r in rows] == [("0", "1"), ("3", "0")]


@pytest.mark.slow
class TestPipeline:
    def pipeline(self, out, config):
        assert run(out, "--seed", "4", "generate", "--n-queries", "30", "--n-templates", "3") == 0
        assert run(out, "--seed", "4", "--config", config, "train") == 0
        assert run(out, "--seed", "4", "predict", "--iterations", "3") == 0
        assert run(out, "--seed", "4", "select", "--strategy", "risk") == 0

    def test_reproducible_artifacts(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"model": TINY_CONFIG.to_dict()}))
        self.pipeline(tmp_path / "a", str(config))
        self.pipeline(tmp_path / "b", str(config))
        for name in ("workload.jsonl", "model.json", "training_log.csv", "predictions.csv", "selection.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_evaluate_and_ablate(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"model": TINY_CONFIG.to_dict()}))
        self.pipeline(tmp_path, str(config))
        assert run(tmp_path, "evaluate", "--iterations", "2") == 0
        assert len(read_csv(str(tmp_path / "metrics.csv"))) == 5
        assert run(tmp_path, "ablate", "--iterations", "2") == 0
        assert len(read_csv(str(tmp_path / "ablation.csv"))) == 7
