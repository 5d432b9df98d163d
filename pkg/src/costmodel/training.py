"""training loop: gaussian likelihood, Adam, learning rate plateau and early stopping"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import TrainingDivergedError, ValidationError
from ..models import Workload, WorkloadSample
from ..nn import Adam, Tensor, gaussian_nll, no_grad
from ..utility import derive_seed, write_csv
from .config import ModelConfig
from .inference import aggregate, mc_inference_query
from .network import TrainedModel, collate
from .preprocess import EncodedPlan, EncodedQuery, PreprocessStats, encode_plan, fit_preprocess

logger = logging.getLogger(__name__)

_INIT, _SHUFFLE, _DROPOUT, _CALIBRATE = range(4)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float
    lr: float


@dataclass
class TrainingLog:
    """per epoch losses; epoch 0 holds the validation loss before training"""
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    variance_scale: float = 1.0

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def initial_val_nll(self) -> float:
        return self.records[0].val_nll

    @property
    def best_val_nll(self) -> float:
        return min(r.val_nll for r in self.records)

    def write_csv(self, path: str, seed: Optional[int] = None, config: Optional[Dict] = None) -> None:
        write_csv(path, ("epoch", "train_nll", "val_nll", "lr"),
                  ((r.epoch, r.train_nll, r.val_nll, r.lr) for r in self.records), seed, config)

    def info(self) -> str:
        return (f"{len(self.records) - 1} epochs, val nll {self.initial_val_nll:.4f} -> "
                f"{self.best_val_nll:.4f} (best epoch {self.best_epoch}), "
                f"variance scale {self.variance_scale:.3f}")


@dataclass(frozen=True)
class _Item:
    query: int
    plan: EncodedPlan
    label: float


class _Dataset:
    """encoded queries and one item per (query, plan) pair"""

    def __init__(self, samples: Sequence[WorkloadSample], stats: PreprocessStats) -> None:
        self.queries: List[EncodedQuery] = []
        self.items: List[_Item] = []
        for sample in samples:
            q_idx = len(self.queries)
            self.queries.append(stats.encode_query(sample.query))
            labels = stats.transform_label(sample.times)
            for plan, label in zip(sample.plans, labels):
                self.items.append(_Item(q_idx, encode_plan(plan, sample.query), float(label)))

    def __len__(self) -> int:
        return len(self.items)

    def batch(self, item_indices: Sequence[int]):
        items = [self.items[i] for i in item_indices]
        local: Dict[int, int] = {}
        for item in items:
            local.setdefault(item.query, len(local))
        queries = [self.queries[q] for q in local]
        batch = collate(queries, [(local[item.query], item.plan) for item in items])
        return batch, Tensor(np.array([item.label for item in items]))


def _state_snapshot(model: TrainedModel) -> List[np.ndarray]:
    return [p.data.copy() for p in model.network.parameters()]


def _restore(model: TrainedModel, snapshot: List[np.ndarray]) -> None:
    for param, values in zip(model.network.parameters(), snapshot):
        param.data[...] = values


def evaluate_nll(model: TrainedModel, dataset: _Dataset, batch_size: int) -> float:
    """mean gaussian nll over a dataset, dropout off"""
    total = 0.0
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            indices = range(start, min(start + batch_size, len(dataset)))
            batch, labels = dataset.batch(indices)
            mu, log_var = model.network(batch, "deterministic")
            total += gaussian_nll(mu, log_var, labels).item() * len(indices)
    return total / len(dataset)




def calibrate_variance(model: TrainedModel, samples: Sequence[WorkloadSample], seed: int) -> float:
    """rescale the predicted data variance to the residuals of held out samples

    dropout noise during training and averaging exp(log variance) over MC
    passes both inflate the data variance. The scale s = mean(r^2 / v), where
    r is the residual of the MC dropout mean and v the MC averaged data
    variance of every plan, maximises the gaussian likelihood of the residuals
    under v * s; log(s) is added to the frozen log variance offset.

    Args:
        model: trained model, updated in place
        samples: held out samples, normally the validation split
        seed: MC dropout seed

    Returns:
        the applied scale, 1.0 when the samples give no usable estimate
    """
    stats = model.require_stats()
    ratios = []
    for idx, sample in enumerate(samples):
        labels = stats.transform_label(sample.times)
        draws = mc_inference_query(model, sample.query, sample.plans, model.config.mc_iterations,
                                   derive_seed(seed, idx))
        for label, plan_draws in zip(labels, draws):
            dist = aggregate(plan_draws)
            if dist.data_variance > 0:
                ratios.append((label - dist.mean) ** 2 / dist.data_variance)
    scale = float(np.mean(ratios)) if ratios else math.nan
    if not math.isfinite(scale) or scale <= 0:
        logger.warning("Variance calibration skipped, no usable residuals in %d samples", len(samples))
        return 1.0
    model.network.log_var_offset.data[...] += math.log(scale)
    logger.info("Data variance calibrated on %d plans, scale %.3f", len(ratios), scale)
    return scale


def train(workload: Workload, config: ModelConfig, seed: int,
          stats: Optional[PreprocessStats] = None) -> Tuple[TrainedModel, TrainingLog]:
    """fit the probabilistic cost model on the train split

    minimises the gaussian negative log likelihood with Adam. The validation
    loss is computed every epoch; the learning rate is multiplied by
    plateau_factor after plateau_patience epochs without improvement and
    training stops after patience epochs without improvement. The returned
    model holds the parameters of the best validation epoch, with its data
    variance calibrated on the validation split when
    config.calibrate_variance is set.

    Args:
        workload: samples with train and validation splits
        config: ModelConfig
        seed: initialisation, shuffling and dropout seed
        stats: preprocessing statistics, fitted on the train split when omitted

    Raises:
        ValidationError when the train or validation split is empty
        TrainingDivergedError when the loss becomes NaN

    Returns:
        (TrainedModel, TrainingLog)
    """
    train_samples = list(workload.split("train"))
    val_samples = list(workload.split("validation"))
    if not train_samples or not val_samples:
        raise ValidationError(
            f"training needs train and validation samples (got {len(train_samples)} and {len(val_samples)})")
    stats = stats or fit_preprocess(train_samples)
    model = TrainedModel.initialise(stats, config, derive_seed(seed, _INIT))
    train_set = _Dataset(train_samples, stats)
    val_set = _Dataset(val_samples, stats)
    shuffle_rng = np.random.default_rng(derive_seed(seed, _SHUFFLE))
    dropout_rng = np.random.default_rng(derive_seed(seed, _DROPOUT))
    optimizer = Adam(model.network.trainable_parameters(), lr=config.learning_rate)

    log = TrainingLog()
    best = evaluate_nll(model, val_set, config.batch_size)
    log.append(EpochRecord(0, math.nan, best, optimizer.lr))
    best_snapshot = _state_snapshot(model)
    since_best = 0
    since_reduction = 0
    logger.info("Training on %d plans (%d validation), initial val nll %.4f",
                len(train_set), len(val_set), best)

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            indices = order[start:start + config.batch_size]
            batch, labels = train_set.batch(indices)
            mu, log_var = model.network(batch, "train", dropout_rng)
            loss = gaussian_nll(mu, log_var, labels)
            if not math.isfinite(loss.item()):
                raise TrainingDivergedError(epoch, loss.item())
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(indices)
        train_nll = total / len(train_set)
        val_nll = evaluate_nll(model, val_set, config.batch_size)
        if math.isnan(val_nll):
            raise TrainingDivergedError(epoch, val_nll)
        log.append(EpochRecord(epoch, train_nll, val_nll, optimizer.lr))
        logger.info("epoch %d: train nll %.4f, val nll %.4f, lr %.2e", epoch, train_nll, val_nll, optimizer.lr)

        if val_nll < best:
            best = val_nll
            best_snapshot = _state_snapshot(model)
            log.best_epoch = epoch
            since_best = 0
            since_reduction = 0
        else:
            since_best += 1
            since_reduction += 1
        if since_best >= config.patience:
            logger.info("Early stopping at epoch %d, best epoch %d", epoch, log.best_epoch)
            break
        if since_reduction >= config.plateau_patience:
            optimizer.lr *= config.plateau_factor
            since_reduction = 0
            logger.debug("Validation loss plateaued, learning rate reduced to %.2e", optimizer.lr)

    _restore(model, best_snapshot)
    if config.calibrate_variance:
        log.variance_scale = calibrate_variance(model, val_samples, derive_seed(seed, _CALIBRATE))
    return model, log
