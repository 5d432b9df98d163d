"""monte carlo dropout inference and the per plan cost distributions"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from ..errors import ValidationError
from ..models import CostDistribution, PlanTree, QueryGraph, Workload
from ..nn import no_grad
from ..utility import LapTimer, derive_seed, read_csv, worker_count, write_csv
from .network import TrainedModel

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ("query_id", "plan_id", "mean", "data_var", "model_var", "total_var", "infer_ms")


@dataclass(frozen=True)
class MCDropoutSamples:
    """T (mean, variance) estimates of one plan in transformed label space"""
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        if self.means.shape != self.variances.shape or self.means.ndim != 1 or len(self.means) == 0:
            raise ValidationError("MC dropout samples need T >= 1 aligned means and variances")
        if np.any(self.variances < 0):
            raise ValidationError("MC dropout variances must be >= 0")

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]]) -> Self:
        return cls(np.array([p[0] for p in pairs], dtype=np.float64),
                   np.array([p[1] for p in pairs], dtype=np.float64))


def aggregate(samples: MCDropoutSamples) -> CostDistribution:
    """collapse T stochastic estimates into one distribution

    mean = average of the means, data variance = average of the predicted
    variances, model variance = population variance of the means (computed
    around the sample mean, two pass)

    Usage:
        >>> aggregate(MCDropoutSamples.from_pairs([(1, 1), (3, 1)])).total_variance
        2.0
    """
    mean = float(samples.means.mean())
    data_variance = float(samples.variances.mean())
    centred = samples.means - mean
    # identical passes (T = 1 or no dropout) give exactly zero
    model_variance = float(np.mean(centred * centred)) if np.ptp(samples.means) > 0 else 0.0
    return CostDistribution.from_components(mean, data_variance, model_variance)


def mc_inference_query(model: TrainedModel, query: QueryGraph, plans: Sequence[PlanTree],
                       iterations: int, seed: int) -> List[MCDropoutSamples]:
    """T stochastic forward passes over all plans of a query at once

    every pass draws fresh dropout masks from a generator seeded with `seed`

    Returns:
        one MCDropoutSamples per plan
    """
    if iterations < 1:
        raise ValidationError(f"MC dropout needs T >= 1, got {iterations}")
    batch = model.batch(query, plans)
    rng = np.random.default_rng(seed)
    means = np.empty((iterations, len(plans)))
    variances = np.empty((iterations, len(plans)))
    with no_grad():
        for t in range(iterations):
            mu, log_var = model.network(batch, "mc_inference", rng)
            means[t] = mu.data
            variances[t] = np.exp(log_var.data)
    return [MCDropoutSamples(means[:, p].copy(), variances[:, p].copy()) for p in range(len(plans))]


def mc_inference(model: TrainedModel, query: QueryGraph, plan: PlanTree, iterations: int, seed: int) -> MCDropoutSamples:
    """T stochastic forward passes of one plan"""
    return mc_inference_query(model, query, [plan], iterations, seed)[0]


@dataclass(frozen=True)
class PredictionRow:
    query_id: int
    plan_id: int
    distribution: CostDistribution
    infer_ms: float = 0.0


class PredictionTable:
    def __init__(self, rows: Sequence[PredictionRow]) -> None:
        """per plan cost distributions keyed by (query id, plan id)

        Usage:
            >>> table = predict_workload(model, workload.split("test"), 10, seed=1)
            >>> dists = table.for_query(17)
        """
        self.rows = list(rows)
        self._by_query: Dict[int, List[PredictionRow]] = {}
        for row in self.rows:
            self._by_query.setdefault(row.query_id, []).append(row)
        for group in self._by_query.values():
            group.sort(key=lambda r: r.plan_id)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[PredictionRow]:
        return iter(self.rows)

    def __repr__(self) -> str:
        return f"<PredictionTable queries={len(self._by_query)} rows={len(self)}>"

    def query_ids(self) -> List[int]:
        return list(self._by_query)

    def for_query(self, query_id: int) -> List[CostDistribution]:
        """distributions of a query's plans ordered by plan id"""
        if query_id not in self._by_query:
            raise ValidationError(f"no predictions for query {query_id}")
        return [row.distribution for row in self._by_query[query_id]]

    def infer_ms(self, query_id: int) -> float:
        return self._by_query[query_id][0].infer_ms

    def write_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
        write_csv(path, PREDICTION_COLUMNS,
                  ((r.query_id, r.plan_id, r.distribution.mean, r.distribution.data_variance,
                    r.distribution.model_variance, r.distribution.total_variance, r.infer_ms) for r in self.rows),
                  seed, config)

    @classmethod
    def from_csv(cls, path: str) -> Self:
        rows = []
        for record in read_csv(path):
            dist = CostDistribution.from_components(float(record["mean"]), float(record["data_var"]),
                                                    float(record["model_var"]))
            rows.append(PredictionRow(int(record["query_id"]), int(record["plan_id"]), dist,
                                      float(record["infer_ms"])))
        return cls(rows)


def _predict_query(model: TrainedModel, query_id: int, sample, iterations: int, seed: int,
                   record_timing: bool) -> List[PredictionRow]:
    timer = LapTimer()
    samples = mc_inference_query(model, sample.query, sample.plans, iterations, derive_seed(seed, query_id))
    elapsed = timer.lap() * 1000.0
    infer_ms = elapsed if record_timing else 0.0
    return [PredictionRow(query_id, plan_id, aggregate(s), infer_ms) for plan_id, s in enumerate(samples)]


def predict_workload(model: TrainedModel, workload: Workload, iterations: int, seed: int,
                     record_timing: bool = False, threads: Optional[int] = None) -> PredictionTable:
    """cost distribution of every (query, plan) of a workload

    each query gets its own derived seed, so results do not depend on the
    number of threads. With record_timing the per query wall clock inference
    time is measured on a single thread, otherwise infer_ms is 0.

    Args:
        model: TrainedModel with preprocessing statistics
        workload: queries to predict
        iterations: MC dropout passes T
        seed: master seed
        record_timing: measure per query inference time
        threads: worker threads, ROQ_LAB_THREADS (or one per cpu) when omitted

    Raises:
        ValidationError when the model has no preprocessing statistics
    """
    model.require_stats()
    items = list(workload.items())
    threads = 1 if record_timing else (threads or worker_count())
    if threads <= 1 or len(items) <= 1:
        groups = [_predict_query(model, qid, s, iterations, seed, record_timing) for qid, s in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            groups = list(pool.map(lambda pair: _predict_query(model, pair[0], pair[1], iterations, seed, False),
                                   items))
    rows = [row for group in groups for row in group]
    logger.info("Predicted %d plans of %d queries with T=%d", len(rows), len(items), iterations)
    return PredictionTable(rows)
