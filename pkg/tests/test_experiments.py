import dataclasses

import numpy as np
import pytest

from src.bench import generate_workload
from src.costmodel import ModelConfig, train
from src.errors import ValidationError
from src.experiments import decomposition_table, run_ablation, run_evaluation, run_inference_sweep, run_workload_shift
from src.selection import STRATEGY_TAGS, parameter_grid

from conftest import TINY_CONFIG

pytestmark = pytest.mark.slow


class TestEvaluation:
    def test_every_strategy_reported(self, tiny_workload, tiny_model):
        report, tuned = run_evaluation(tiny_workload, tiny_model, iterations=3, seed=1)
        assert [r.strategy for r in report] == list(STRATEGY_TAGS)
        for tag in STRATEGY_TAGS:
            assert tuned[tag] in parameter_grid(tag)
        base = report.get("base")
        assert base.unchanged_pct == 100.0
        for record in report:
            assert record.subopt_median >= 1.0
            assert record.improved_pct + record.regressed_pct + record.unchanged_pct == pytest.approx(100.0)

    def test_ablation_rows(self, tiny_workload, tiny_model):
        report = run_ablation(tiny_workload, tiny_model, iterations=3, seed=1)
        assert [(r.strategy, r.uncertainty) for r in report] == [
            ("base", ""), ("risk", "data"), ("cons", "data"), ("risk", "model"), ("cons", "model"),
            ("risk", "total"), ("cons", "total")]

    def test_no_test_split(self, tiny_workload, tiny_model):
        with pytest.raises(ValidationError):
            run_evaluation(tiny_workload.split("train"), tiny_model, iterations=2, seed=1)


class TestWorkloadShift:
    config = dataclasses.replace(TINY_CONFIG, max_epochs=1)

    def test_no_held_out_templates_gives_zero_deltas(self, tiny_workload):
        report = run_workload_shift(tiny_workload, [], self.config, seeds=[1], iterations=2)
        assert [r.model for r in report.records] == ["all", "excluded", "delta"]
        values = report.deltas()[0].values
        assert np.all((values == 0.0) | np.isnan(values))

    def test_held_out_template(self, tiny_workload, tmp_path):
        held = next(t for t in tiny_workload.template_ids()
                    if len(tiny_workload.without_templates([t]).split("validation"))
                    and len(tiny_workload.with_templates([t]).filter(lambda s: s.split != "train")))
        lines = []
        report = run_workload_shift(tiny_workload, [held], self.config, seeds=[1], iterations=2,
                                    progress=lines.append)
        assert len(report) == 3
        assert len(lines) == 1
        for record in report.records[:2]:
            assert np.isfinite(record.q_error_50) and record.q_error_50 >= 1.0
        report.write_csv(str(tmp_path / "shift.csv"), seed=1)

    def test_every_template_held_out(self, tiny_workload):
        with pytest.raises(ValidationError):
            run_workload_shift(tiny_workload, tiny_workload.template_ids(), self.config, seeds=[1], iterations=2)

    def test_unknown_template(self, tiny_workload):
        with pytest.raises(ValidationError):
            run_workload_shift(tiny_workload, [99], self.config, seeds=[1], iterations=2)


class TestInferenceSweep:
    def test_rows_and_timings(self, tiny_workload, tiny_model, tmp_path):
        test = tiny_workload.split("test")
        report = run_inference_sweep(test, tiny_model, iteration_values=(1, 3), seed=1, runs=2)
        assert [r.iterations for r in report.records] == [1, 3]
        assert report.records[-1].agreement == 1.0
        assert [(t.iterations, t.run) for t in report.timings] == [(1, 0), (1, 1), (3, 0), (3, 1)]
        assert report.median_ms(3) > 0
        report.write_csv(str(tmp_path / "sweep.csv"))
        report.write_timing_csv(str(tmp_path / "sweep_timing.csv"))

    def test_invalid(self, tiny_workload, tiny_model):
        with pytest.raises(ValidationError):
            run_inference_sweep(tiny_workload.split("test"), tiny_model, iteration_values=(), seed=1)
        with pytest.raises(ValidationError):
            run_inference_sweep(tiny_workload.split("test"), tiny_model, iteration_values=(2,), seed=1, runs=0)


class TestDecompositionTable:
    def test_terms_within_two_percent(self):
        rows = decomposition_table()
        assert [r[0] for r in rows] == ["data_term", "model_term", "total"]
        for _, exact, sampled, rel in rows:
            assert rel <= 0.02
            assert sampled == pytest.approx(exact, rel=0.02)


STOCK_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="module")
def stock_runs():
    """stock 1000 query, 15 template workloads with a stock model, one per seed"""
    runs = {}
    for seed in STOCK_SEEDS:
        workload = generate_workload(seed, 1000, 15, 24)
        model, _ = train(workload, ModelConfig(), seed)
        runs[seed] = (workload, model)
    return runs


class TestStockWorkload:
    def test_risk_aware_tail_no_worse_than_base(self, stock_runs):
        wins = {"risk": 0, "cons": 0}
        for seed, (workload, model) in stock_runs.items():
            report, _ = run_evaluation(workload, model, model.config.mc_iterations, seed, tags=("base", "risk", "cons"))
            base = report.get("base").subopt_99
            for tag in wins:
                tail = report.get(tag, "total").subopt_99
                assert tail <= 1.05 * base, (seed, tag, tail, base)
                wins[tag] += tail <= base
        assert wins["risk"] >= 4 and wins["cons"] >= 4, wins

    def test_ten_passes_agree_with_a_hundred(self, stock_runs):
        workload, model = stock_runs[1]
        report = run_inference_sweep(workload.split("test"), model, iteration_values=(10, 100), seed=1, runs=1)
        ten, hundred = report.records
        assert ten.agreement >= 0.8
        assert abs(ten.subopt_median - hundred.subopt_median) <= 0.05
