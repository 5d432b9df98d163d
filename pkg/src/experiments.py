"""experiment suites: strategy evaluation, uncertainty ablation, workload shift and inference sweep"""
import logging
from dataclasses import astuple, dataclass, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bench.pcf import LinearPCF, decompose_variance_closed_form, decompose_variance_monte_carlo
from .costmodel import ModelConfig, PredictionTable, TrainedModel, predict_workload, train
from .errors import ValidationError
from .metrics import (CLASSIFY_THRESHOLD, MetricsReport, accuracy, percentile,
                      strategy_record, suboptimality)
from .models import UNCERTAINTIES, Uncertainty, Workload
from .risk import pairwise_risk, z_score
from .selection import STRATEGY_TAGS, BaseStrategy, ConservativeStrategy, RiskStrategy, strategy_from_tag, tune_parameters
from .utility import LapTimer, write_csv

logger = logging.getLogger(__name__)

SWEEP_ITERATIONS = (5, 10, 25, 50, 100)
SWEEP_RUNS = 10

Progress = Optional[Callable[[str], None]]


def query_times(workload: Workload) -> List[List[float]]:
    return [sample.times for sample in workload]


def choose(strategy: BaseStrategy, table: PredictionTable, workload: Workload) -> List[int]:
    """plan chosen by a strategy for every query of a workload"""
    return [strategy.select(table.for_query(qid)).chosen for qid in workload.query_ids]


def prediction_accuracy(model: TrainedModel, table: PredictionTable, workload: Workload) -> Dict[str, float]:
    """q-error and rank correlation of predicted means (in seconds) over every plan"""
    stats = model.require_stats()
    actual: List[float] = []
    predicted: List[float] = []
    for qid, sample in workload.items():
        means = [d.mean for d in table.for_query(qid)]
        actual.extend(sample.times)
        predicted.extend(float(s) for s in stats.inverse_label(means))
    return accuracy(actual, predicted)


def mean_infer_ms(table: PredictionTable, workload: Workload) -> float:
    return float(np.mean([table.infer_ms(qid) for qid in workload.query_ids]))


def _tune(tag: str, uncertainty: Uncertainty, validation: Workload, val_table: Optional[PredictionTable]) -> Dict[str, float]:
    if val_table is None or len(validation) == 0:
        return {}
    predictions = [val_table.for_query(qid) for qid in validation.query_ids]
    return tune_parameters(predictions, query_times(validation), tag, uncertainty)


def evaluate_strategies(workload: Workload, model: TrainedModel, table: PredictionTable,
                        strategies: Sequence[Tuple[BaseStrategy, str]], reference: str = "base",
                        threshold: float = CLASSIFY_THRESHOLD) -> MetricsReport:
    """score strategies on a workload

    Args:
        workload: queries to evaluate, all present in table
        model: model behind the predictions, for the q-error in seconds
        table: predictions of every plan of workload
        strategies: (strategy, uncertainty label) pairs, the label is "" when unused
        reference: tag of the strategy used for the improved/regressed classification
        threshold: unchanged band of the classification

    Returns:
        MetricsReport with one record per strategy, in the given order
    """
    if len(workload) == 0:
        raise ValidationError("cannot evaluate strategies on an empty workload")
    times = query_times(workload)
    acc = prediction_accuracy(model, table, workload)
    infer_ms = mean_infer_ms(table, workload)
    choices = [choose(strategy, table, workload) for strategy, _ in strategies]
    names = [strategy.name for strategy, _ in strategies]
    if reference in names:
        reference_chosen = choices[names.index(reference)]
    else:
        reference_chosen = choose(BaseStrategy(), table, workload)
    records = [strategy_record(strategy.name, label, times, chosen, reference_chosen, acc, infer_ms, threshold)
               for (strategy, label), chosen in zip(strategies, choices)]
    return MetricsReport(records)


def predict_splits(model: TrainedModel, workload: Workload, iterations: int, seed: int,
                   record_timing: bool = False) -> Tuple[Workload, PredictionTable, Workload, Optional[PredictionTable]]:
    """predictions for the test split and, when present, the validation split"""
    test = workload.split("test")
    if len(test) == 0:
        raise ValidationError("the workload has no test queries")
    validation = workload.split("validation")
    test_table = predict_workload(model, test, iterations, seed, record_timing)
    val_table = predict_workload(model, validation, iterations, seed) if len(validation) else None
    return test, test_table, validation, val_table


def run_evaluation(workload: Workload, model: TrainedModel, iterations: int, seed: int,
                   tags: Sequence[str] = STRATEGY_TAGS, uncertainty: Uncertainty = "total",
                   record_timing: bool = False) -> Tuple[MetricsReport, Dict[str, Dict[str, float]]]:
    """tune every strategy on the validation split and score it on the test split

    Returns:
        (MetricsReport, tuned parameters per strategy tag)
    """
    test, test_table, validation, val_table = predict_splits(model, workload, iterations, seed, record_timing)
    tuned: Dict[str, Dict[str, float]] = {}
    strategies = []
    for tag in tags:
        tuned[tag] = _tune(tag, uncertainty, validation, val_table)
        strategy = strategy_from_tag(tag, uncertainty=uncertainty, **tuned[tag])
        strategies.append((strategy, "" if tag == "base" else uncertainty))
        logger.info("Strategy %s: %s", tag, strategy.info())
    return evaluate_strategies(test, model, test_table, strategies), tuned


def run_ablation(workload: Workload, model: TrainedModel, iterations: int, seed: int,
                 record_timing: bool = False) -> MetricsReport:
    """risk and conservative selection under model, data and total uncertainty, plus base

    the conservative weight is tuned on the validation split per uncertainty
    (1.0 without validation queries)
    """
    test, test_table, validation, val_table = predict_splits(model, workload, iterations, seed, record_timing)
    strategies: List[Tuple[BaseStrategy, str]] = [(BaseStrategy(), "")]
    for uncertainty in UNCERTAINTIES:
        strategies.append((RiskStrategy(uncertainty), uncertainty))
        f_s = _tune("cons", uncertainty, validation, val_table).get("f_s", 1.0)
        strategies.append((ConservativeStrategy(f_s, uncertainty), uncertainty))
    report = evaluate_strategies(test, model, test_table, strategies)
    logger.info("Ablation over %d test queries:\n%s", len(test), report.info())
    return report


@dataclass(frozen=True)
class ShiftRecord:
    seed: int
    model: str
    q_error_50: float
    q_error_90: float
    q_error_95: float
    q_error_99: float
    q_error_mean: float
    spearman: float
    subopt_median: float
    subopt_99: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @property
    def values(self) -> np.ndarray:
        return np.array(astuple(self)[2:], dtype=np.float64)


class ShiftReport:
    def __init__(self, records: Sequence[ShiftRecord]) -> None:
        """per seed metrics of the model trained on every template ("all"), the model
        trained without the held-out templates ("excluded") and their difference ("delta")
        """
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def deltas(self) -> List[ShiftRecord]:
        return [r for r in self.records if r.model == "delta"]

    def write_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
        write_csv(path, ShiftRecord.columns(), (astuple(r) for r in self.records), seed, config)


def _shift_record(seed: int, name: str, model: TrainedModel, table: PredictionTable,
                  held_out: Workload) -> ShiftRecord:
    acc = prediction_accuracy(model, table, held_out)
    chosen = choose(BaseStrategy(), table, held_out)
    subopts = [suboptimality(t, c) for t, c in zip(query_times(held_out), chosen)]
    return ShiftRecord(seed, name, subopt_median=percentile(subopts, 50), subopt_99=percentile(subopts, 99), **acc)


def run_workload_shift(workload: Workload, held_out_templates: Sequence[int], config: ModelConfig,
                       seeds: Sequence[int], iterations: int, progress: Progress = None) -> ShiftReport:
    """compare a model trained on every template with one that never saw the held-out templates

    both models are evaluated on the held-out templates' validation and test
    queries, which neither was trained on. With no held-out templates both
    models are trained on the same data and evaluated on every non-train query.

    Args:
        workload: workload with train, validation and test splits
        held_out_templates: template ids excluded from the second model
        config: ModelConfig of both models
        seeds: one experiment per seed
        iterations: MC dropout passes
        progress: optional callback receiving a status line

    Raises:
        ValidationError when a held-out template is unknown or every template is held out

    Returns:
        ShiftReport
    """
    known = set(workload.template_ids())
    held = sorted(set(held_out_templates))
    unknown = [t for t in held if t not in known]
    if unknown:
        raise ValidationError(f"held-out templates {unknown} do not occur in the workload")
    if held and set(held) == known:
        raise ValidationError("holding out every template leaves nothing to train on")
    unseen = workload.with_templates(held) if held else workload
    unseen = unseen.filter(lambda s: s.split != "train")
    if len(unseen) == 0:
        raise ValidationError("the held-out templates have no validation or test queries")
    remaining = workload.without_templates(held)

    records = []
    for seed in seeds:
        model_all, _ = train(workload, config, seed)
        model_excluded, _ = train(remaining, config, seed)
        rec_all = _shift_record(seed, "all", model_all, predict_workload(model_all, unseen, iterations, seed), unseen)
        rec_excluded = _shift_record(seed, "excluded", model_excluded,
                                     predict_workload(model_excluded, unseen, iterations, seed), unseen)
        delta = rec_excluded.values - rec_all.values
        records += [rec_all, rec_excluded, ShiftRecord(seed, "delta", *(float(v) for v in delta))]
        logger.info("Workload shift seed %d: median q-error %.3f -> %.3f", seed,
                    rec_all.q_error_50, rec_excluded.q_error_50)
        if progress:
            progress(f"shift seed {seed}: median q-error delta {delta[0]:+.3f}")
    return ShiftReport(records)


@dataclass(frozen=True)
class SweepRecord:
    iterations: int
    subopt_median: float
    subopt_mean: float
    agreement: float


@dataclass(frozen=True)
class SweepTiming:
    iterations: int
    run: int
    mean_ms: float


class SweepReport:
    def __init__(self, records: Sequence[SweepRecord], timings: Sequence[SweepTiming]) -> None:
        """selection quality per number of MC passes and the measured inference times

        agreement is the fraction of queries whose risk selection matches the
        selection at the largest number of passes
        """
        self.records = list(records)
        self.timings = list(timings)

    def __len__(self) -> int:
        return len(self.records)

    def median_ms(self, iterations: int) -> float:
        return float(np.median([t.mean_ms for t in self.timings if t.iterations == iterations]))

    def write_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
        write_csv(path, ("iterations", "subopt_median", "subopt_mean", "agreement"),
                  (astuple(r) for r in self.records), seed, config)

    def write_timing_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
        write_csv(path, ("iterations", "run", "mean_ms"), (astuple(t) for t in self.timings), seed, config)


def run_inference_sweep(workload: Workload, model: TrainedModel, iteration_values: Sequence[int] = SWEEP_ITERATIONS,
                        seed: int = 1, runs: int = SWEEP_RUNS, uncertainty: Uncertainty = "total",
                        progress: Progress = None) -> SweepReport:
    """inference time and risk selection quality as a function of the MC passes T

    every run predicts the whole workload single threaded with timing on;
    selections come from the first run (all runs share the seed)
    """
    if len(workload) == 0 or not iteration_values:
        raise ValidationError("the sweep needs queries and at least one iteration count")
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    strategy = RiskStrategy(uncertainty)
    times = query_times(workload)
    choices: Dict[int, List[int]] = {}
    timings: List[SweepTiming] = []
    timer = LapTimer()
    for iterations in iteration_values:
        for run in range(runs):
            table = predict_workload(model, workload, iterations, seed, record_timing=True)
            timings.append(SweepTiming(iterations, run, mean_infer_ms(table, workload)))
            if run == 0:
                choices[iterations] = choose(strategy, table, workload)
            timer.lap()
            if progress:
                progress(f"T={iterations} run {run + 1}/{runs} {timer.info()}")
    reference = choices[max(iteration_values)]
    records = []
    for iterations in iteration_values:
        chosen = choices[iterations]
        subopts = [suboptimality(t, c) for t, c in zip(times, chosen)]
        agreement = float(np.mean([a == b for a, b in zip(chosen, reference)]))
        records.append(SweepRecord(iterations, percentile(subopts, 50), float(np.mean(subopts)), agreement))
    logger.info("Inference sweep over T=%s on %d queries", list(iteration_values), len(workload))
    return SweepReport(records, timings)


TABLE1_SCENARIOS = (("a", 1.0, 1.0), ("b", 1.0, 4.0), ("c", 4.0, 1.0), ("d", 4.0, 4.0))
TABLE1_MEANS = (8.0, 10.0)


def risk_table(means: Tuple[float, float] = TABLE1_MEANS,
               scenarios: Sequence[Tuple[str, float, float]] = TABLE1_SCENARIOS) -> List[Tuple[str, float, float, float, float]]:
    """risk of picking X (lower mean) over Y under different standard deviations

    Returns:
        (scenario, sigma_x, sigma_y, z, risk) per scenario
    """
    mu_x, mu_y = means
    return [(name, s_x, s_y, z_score(mu_x, s_x ** 2, mu_y, s_y ** 2), pairwise_risk(mu_x, s_x ** 2, mu_y, s_y ** 2))
            for name, s_x, s_y in scenarios]


DEFAULT_PCF = LinearPCF(mu_a=2.0, sigma_a=0.5, mu_b=1.0, sigma_b=0.3, cov_ab=0.0, mu_x=5.0, sigma_x=1.0)


def decomposition_table(pcf: LinearPCF = DEFAULT_PCF, n_samples: int = 1_000_000,
                        seed: int = 1) -> List[Tuple[str, float, float, float]]:
    """closed form against Monte Carlo variance terms

    Returns:
        (term, closed form, monte carlo, relative difference) for data, model and total
    """
    exact = decompose_variance_closed_form(pcf)
    sampled = decompose_variance_monte_carlo(pcf, n_samples, seed)
    rows = []
    for term in exact._fields:
        e, s = getattr(exact, term), getattr(sampled, term)
        rows.append((term, e, s, abs(s - e) / abs(e) if e else abs(s)))
    return rows
