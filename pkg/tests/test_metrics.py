import math

import numpy as np
import pytest

from src.errors import ValidationError
from src.metrics import (IMPROVED, REGRESSED, UNCHANGED, MetricsReport, StrategyRecord, accuracy, classify_queries,
                         percentile, q_error, spearman, strategy_record, suboptimality)
from src.utility import read_csv


def brute_force_spearman(a, b):
    """average ranks by counting, then the textbook Pearson formula"""
    def ranks(values):
        out = []
        for v in values:
            below = sum(1 for w in values if w < v)
            equal = sum(1 for w in values if w == v)
            out.append(below + (equal + 1) / 2.0)
        return out

    ra, rb = ranks(a), ranks(b)
    ma, mb = sum(ra) / len(ra), sum(rb) / len(rb)
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    return cov / math.sqrt(sum((x - ma) ** 2 for x in ra) * sum((y - mb) ** 2 for y in rb))


class TestAccuracyMetrics:
    def test_q_error(self):
        assert q_error(2, 4) == 2.0
        assert q_error(4, 2) == 2.0
        assert q_error(3.5, 3.5) == 1.0

    def test_q_error_rejects_non_positive(self):
        with pytest.raises(ValidationError):
            q_error(0.0, 1.0)

    def test_spearman_monotone(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-15)
        assert spearman([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0, abs=1e-15)

    def test_spearman_ties(self):
        assert spearman([1, 1, 2], [3, 5, 9]) == pytest.approx(brute_force_spearman([1, 1, 2], [3, 5, 9]), abs=1e-12)

    def test_spearman_random_ties(self, rng):
        for _ in range(50):
            a = list(rng.integers(0, 4, size=12))
            b = list(rng.integers(0, 4, size=12))
            if len(set(a)) > 1 and len(set(b)) > 1:
                assert spearman(a, b) == pytest.approx(brute_force_spearman(a, b), abs=1e-12)

    def test_spearman_constant_is_undefined(self):
        assert spearman([1, 1, 1], [1, 2, 3]) is None

    def test_spearman_lengths(self):
        with pytest.raises(ValidationError):
            spearman([1, 2], [1, 2, 3])

    def test_accuracy_reports_nan_for_constant_predictions(self):
        out = accuracy([1.0, 2.0, 4.0], [2.0, 2.0, 2.0])
        assert math.isnan(out["spearman"])
        assert out["q_error_50"] == 2.0
        assert out["q_error_99"] == 2.0


class TestPercentile:
    def test_nearest_rank(self):
        assert percentile([1, 2, 3, 4], 50) == 2
        assert percentile([4, 3, 2, 1], 99) == 4
        assert percentile([7], 0) == 7

    def test_invalid(self):
        with pytest.raises(ValidationError):
            percentile([], 50)
        with pytest.raises(ValidationError):
            percentile([1], 101)


class TestSuboptimality:
    def test_best_plan(self):
        assert suboptimality([3.0, 2.0], 1) == 1.0

    def test_slower_plan(self):
        assert suboptimality([2.0, 4.0], 1) == 2.0


class TestClassify:
    def test_identical(self):
        assert classify_queries([1.0, 2.0], [1.0, 2.0]) == [UNCHANGED, UNCHANGED]

    def test_halved(self):
        assert classify_queries([1.0, 2.0], [0.5, 1.0]) == [IMPROVED, IMPROVED]

    def test_threshold_band(self):
        assert classify_queries([1.0, 1.0, 1.0], [0.97, 1.03, 1.2]) == [UNCHANGED, UNCHANGED, REGRESSED]

    def test_zero_threshold(self):
        assert classify_queries([1.0, 1.0, 1.0], [1.0, 0.999, 1.001], threshold=0.0) == \
               [UNCHANGED, IMPROVED, REGRESSED]


class TestStrategyRecord:
    def make(self):
        times = [[1.0, 2.0], [4.0, 1.0], [3.0, 3.0], [1.0, 10.0]]
        acc = accuracy([1.0, 2.0, 3.0], [1.5, 2.0, 2.5])
        return strategy_record("risk", "total", times, [0, 1, 1, 1], [1, 0, 0, 0], acc, infer_ms=2.5)

    def test_summary(self):
        record = self.make()
        assert record.total_runtime == 1.0 + 1.0 + 3.0 + 10.0
        assert record.subopt_median == 1.0
        assert record.subopt_99 == 10.0
        assert record.improved_pct == 50.0
        assert record.regressed_pct == 25.0
        assert record.improved_pct + record.regressed_pct + record.unchanged_pct == pytest.approx(100.0)

    def test_percentages_sum_to_hundred(self, rng):
        for _ in range(20):
            times = [list(rng.uniform(1, 5, size=3)) for _ in range(7)]
            chosen = list(rng.integers(0, 3, size=7))
            reference = list(rng.integers(0, 3, size=7))
            record = strategy_record("cons", "total", times, chosen, reference, accuracy([1.0, 2.0], [1.0, 3.0]))
            assert record.improved_pct + record.regressed_pct + record.unchanged_pct == pytest.approx(100.0)

    def test_report_csv(self, tmp_path):
        report = MetricsReport([self.make()])
        path = str(tmp_path / "metrics.csv")
        report.write_csv(path, seed=1)
        rows = read_csv(path)
        assert list(rows[0]) == StrategyRecord.columns()
        assert rows[0]["strategy"] == "risk"
        assert float(rows[0]["infer_ms"]) == 2.5
        assert report.get("risk", "total").total_runtime == 15.0
        with pytest.raises(ValidationError):
            report.get("base")

    def test_empty(self):
        with pytest.raises(ValidationError):
            strategy_record("base", "", [], [], [], {})

    def test_columns_are_unique(self):
        columns = StrategyRecord.columns()
        assert len(columns) == len(set(columns))
        assert np.isin(["strategy", "subopt_99", "infer_ms"], columns).all()
