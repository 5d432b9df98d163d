"""evaluation metrics: q-error, rank correlation, suboptimality and the per strategy report"""
import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .utility import write_csv

logger = logging.getLogger(__name__)

IMPROVED, REGRESSED, UNCHANGED = "improved", "regressed", "unchanged"
CLASSIFY_THRESHOLD = 0.05


def percentile(values: Sequence[float], q: float) -> float:
    """nearest-rank percentile: the smallest value with at least q% of values at or below it

    Usage:
        >>> percentile([1, 2, 3, 4], 50)
        2
    """
    if len(values) == 0:
        raise ValidationError("percentile of an empty sequence")
    if not 0 <= q <= 100:
        raise ValidationError(f"percentile must be in [0, 100], got {q}")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def q_error(y: float, y_hat: float) -> float:
    """max(y, y_hat) / min(y, y_hat) for positive times"""
    if y <= 0 or y_hat <= 0:
        raise ValidationError(f"q-error needs positive values, got {y} and {y_hat}")
    return max(y, y_hat) / min(y, y_hat)


def spearman(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    """Spearman rank coefficient: Pearson correlation of the average ranks

    Returns:
        the coefficient, or None when either sequence is constant
    """
    if len(a) != len(b) or len(a) < 2:
        raise ValidationError(f"spearman needs two sequences of equal length >= 2, got {len(a)} and {len(b)}")
    ra = rankdata(a) - (len(a) + 1) / 2.0
    rb = rankdata(b) - (len(b) + 1) / 2.0
    norm = math.sqrt(float(np.dot(ra, ra)) * float(np.dot(rb, rb)))
    if norm == 0:
        return None
    return float(np.dot(ra, rb)) / norm


def suboptimality(times: Sequence[float], chosen: int) -> float:
    """time of the chosen plan over the best time of the query"""
    return times[chosen] / min(times)


def classify_queries(reference: Sequence[float], strategy: Sequence[float],
                     threshold: float = CLASSIFY_THRESHOLD) -> List[str]:
    """improved, regressed or unchanged per query relative to a reference strategy"""
    if len(reference) != len(strategy):
        raise ValidationError(f"{len(reference)} reference and {len(strategy)} strategy times")
    if threshold < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold}")
    out = []
    for ref, t in zip(reference, strategy):
        if t < (1 - threshold) * ref:
            out.append(IMPROVED)
        elif t > (1 + threshold) * ref:
            out.append(REGRESSED)
        else:
            out.append(UNCHANGED)
    return out


@dataclass(frozen=True)
class StrategyRecord:
    """one row of a MetricsReport"""
    strategy: str
    uncertainty: str
    q_error_50: float
    q_error_90: float
    q_error_95: float
    q_error_99: float
    q_error_mean: float
    spearman: float
    subopt_median: float
    subopt_mean: float
    subopt_95: float
    subopt_99: float
    total_runtime: float
    improved_pct: float
    regressed_pct: float
    unchanged_pct: float
    infer_ms: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def accuracy(actual: Sequence[float], predicted: Sequence[float]) -> Dict[str, float]:
    """q-error quantiles and Spearman coefficient of predicted against actual seconds"""
    errors = [q_error(y, y_hat) for y, y_hat in zip(actual, predicted)]
    rho = spearman(actual, predicted) if len(actual) >= 2 else None
    return {
        "q_error_50": percentile(errors, 50),
        "q_error_90": percentile(errors, 90),
        "q_error_95": percentile(errors, 95),
        "q_error_99": percentile(errors, 99),
        "q_error_mean": float(np.mean(errors)),
        "spearman": math.nan if rho is None else rho,
    }


def strategy_record(strategy: str, uncertainty: str, times: Sequence[Sequence[float]], chosen: Sequence[int],
                    reference_chosen: Sequence[int], accuracy_values: Dict[str, float],
                    infer_ms: float = 0.0, threshold: float = CLASSIFY_THRESHOLD) -> StrategyRecord:
    """summarise the selections of one strategy over a set of queries

    Args:
        strategy: strategy tag
        uncertainty: uncertainty selector, "" when unused
        times: per query, the measured time of every plan
        chosen: per query, the selected plan
        reference_chosen: per query, the plan selected by the reference strategy
        accuracy_values: output of `accuracy` for the model behind the strategy
        infer_ms: mean inference time per query
        threshold: unchanged band for the improved/regressed classification
    """
    if not times:
        raise ValidationError("a strategy record needs at least one query")
    subopts = [suboptimality(t, c) for t, c in zip(times, chosen)]
    selected = [t[c] for t, c in zip(times, chosen)]
    classes = classify_queries([t[c] for t, c in zip(times, reference_chosen)], selected, threshold)
    n = len(classes)
    return StrategyRecord(
        strategy=strategy,
        uncertainty=uncertainty,
        subopt_median=percentile(subopts, 50),
        subopt_mean=float(np.mean(subopts)),
        subopt_95=percentile(subopts, 95),
        subopt_99=percentile(subopts, 99),
        total_runtime=float(sum(selected)),
        improved_pct=100.0 * classes.count(IMPROVED) / n,
        regressed_pct=100.0 * classes.count(REGRESSED) / n,
        unchanged_pct=100.0 * classes.count(UNCHANGED) / n,
        infer_ms=infer_ms,
        **accuracy_values,
    )


class MetricsReport:
    def __init__(self, records: Sequence[StrategyRecord]) -> None:
        """per strategy metrics, written as one csv row per strategy

        Usage:
            >>> report = evaluate_strategies(test, model, predictions, strategies)
            >>> report.get("risk").subopt_99
        """
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[StrategyRecord]:
        return iter(self.records)

    def __repr__(self) -> str:
        return f"<MetricsReport strategies={[r.strategy for r in self.records]}>"

    def get(self, strategy: str, uncertainty: Optional[str] = None) -> StrategyRecord:
        for record in self.records:
            if record.strategy == strategy and (uncertainty is None or record.uncertainty == uncertainty):
                return record
        raise ValidationError(f"no record for strategy {strategy!r}")

    def write_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
        write_csv(path, StrategyRecord.columns(), (astuple(r) for r in self.records), seed, config)
        logger.info("Wrote metrics of %d strategies to %s", len(self.records), path)

    def info(self) -> str:
        lines = [f"{'strategy':<10} {'sigma':<6} {'median':>8} {'mean':>8} {'p95':>8} {'p99':>8} {'runtime':>10}"]
        for r in self.records:
            lines.append(f"{r.strategy:<10} {r.uncertainty or '-':<6} {r.subopt_median:>8.3f} {r.subopt_mean:>8.3f} "
                         f"{r.subopt_95:>8.3f} {r.subopt_99:>8.3f} {r.total_runtime:>10.2f}")
        return "\n".join(lines)
