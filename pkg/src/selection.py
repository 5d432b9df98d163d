"""plan selection strategies: base argmin, suboptimality risk, conservative and risk pruning"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .metrics import percentile, suboptimality
from .models import UNCERTAINTIES, CostDistribution, Uncertainty
from .risk import estimation_risk, plan_risk, sor_values

logger = logging.getLogger(__name__)

STRATEGY_TAGS = ("base", "risk", "cons", "risk_prun", "cons_prun")
F_S_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
KEEP_FRACTION_GRID = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class SelectionResult:
    """the chosen plan, the score of every plan and the parameters used

    pruned plans score +inf, so `chosen` is always the first minimum of `scores`
    """
    chosen: int
    scores: np.ndarray
    strategy: str
    parameters: Dict[str, Any] = field(default_factory=dict)

    def info(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.parameters.items())
        return f"{self.strategy}: plan {self.chosen}" + (f" ({params})" if params else "")


def _argmin(scores: np.ndarray) -> int:
    # np.argmin returns the first minimum, i.e. the lowest plan index on ties
    return int(np.argmin(scores))


def _require_plans(dists: Sequence[CostDistribution]) -> None:
    if len(dists) == 0:
        raise ValidationError("plan selection needs at least one plan")


def _check_uncertainty(uncertainty: str) -> None:
    if uncertainty not in UNCERTAINTIES:
        raise ValidationError(f"unknown uncertainty selector {uncertainty!r}")


def fs_from_alpha(alpha: float) -> float:
    """conservative weight f_s = (1 - alpha) / alpha for the mean weight alpha in (0, 1]"""
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    return (1.0 - alpha) / alpha


def prune(n_plans: int, estimation_risks: Sequence[float], plan_risks: Sequence[float],
          f_er: float, f_pr: float) -> List[int]:
    """plans whose estimation and plan risks are both at or below their thresholds

    each threshold is the entry at position floor(n * f) of the ascending
    sorted risks, the position clamped to n - 1, so f is the kept fraction.
    When no plan passes both thresholds the plan with the best worse-of-two
    risk rank survives alone.

    Usage:
        >>> prune(4, [.1, .2, .3, .4], [0, 0, 0, 0], 0.5, 1.0)
        [0, 1, 2]

    Returns:
        ascending indices of the surviving plans
    """
    if n_plans == 0:
        raise ValidationError("cannot prune an empty plan set")
    r_e = np.asarray(estimation_risks, dtype=np.float64)
    r_p = np.asarray(plan_risks, dtype=np.float64)
    if len(r_e) != n_plans or len(r_p) != n_plans:
        raise ValidationError(f"{len(r_e)} estimation and {len(r_p)} plan risks given for {n_plans} plans")
    for name, f in (("f_er", f_er), ("f_pr", f_pr)):
        if not 0.0 < f <= 1.0:
            raise ValidationError(f"{name} must be in (0, 1], got {f}")
    phi_er = np.sort(r_e)[min(int(math.floor(n_plans * f_er)), n_plans - 1)]
    phi_pr = np.sort(r_p)[min(int(math.floor(n_plans * f_pr)), n_plans - 1)]
    survivors = [i for i in range(n_plans) if r_e[i] <= phi_er and r_p[i] <= phi_pr]
    if not survivors:
        worst_rank = np.maximum(rankdata(r_e, method="min"), rankdata(r_p, method="min"))
        survivors = [_argmin(worst_rank)]
        logger.warning("no plan passed both risk thresholds, kept plan %d", survivors[0])
    return survivors


class BaseStrategy:
    """base class for plan selection strategies: score every plan, pick the lowest score"""
    name = "base"

    def scores(self, dists: Sequence[CostDistribution]) -> np.ndarray:
        """predicted mean cost of every plan"""
        return np.array([d.mean for d in dists], dtype=np.float64)

    def parameters(self) -> Dict[str, Any]:
        return {}

    def select(self, dists: Sequence[CostDistribution]) -> SelectionResult:
        """choose a plan

        Args:
            dists: predicted CostDistribution per plan

        Raises:
            ValidationError on an empty plan set

        Returns:
            SelectionResult
        """
        _require_plans(dists)
        scores = self.scores(dists)
        return SelectionResult(_argmin(scores), scores, self.name, self.parameters())

    def info(self) -> str:
        return "lowest predicted mean"


class RiskStrategy(BaseStrategy):
    name = "risk"

    def __init__(self, uncertainty: Uncertainty = "total") -> None:
        """pick the plan of lowest suboptimality risk

        Args:
            uncertainty: variance component used for the risk (data, model or total)
        """
        _check_uncertainty(uncertainty)
        self.uncertainty = uncertainty

    def scores(self, dists: Sequence[CostDistribution]) -> np.ndarray:
        if len(dists) == 1:
            return np.zeros(1)
        return sor_values(dists, self.uncertainty)

    def parameters(self) -> Dict[str, Any]:
        return {"uncertainty": self.uncertainty}

    def info(self) -> str:
        return f"lowest suboptimality risk ({self.uncertainty} uncertainty)"


class ConservativeStrategy(BaseStrategy):
    name = "cons"

    def __init__(self, f_s: float, uncertainty: Uncertainty = "total") -> None:
        """pick the plan of lowest mean + f_s * sigma

        Args:
            f_s: weight of the standard deviation (>= 0)
            uncertainty: variance component of sigma
        """
        if f_s < 0:
            raise ValidationError(f"f_s must be >= 0, got {f_s}")
        _check_uncertainty(uncertainty)
        self.f_s = f_s
        self.uncertainty = uncertainty

    def scores(self, dists: Sequence[CostDistribution]) -> np.ndarray:
        return np.array([d.mean + self.f_s * d.std(self.uncertainty) for d in dists], dtype=np.float64)

    def parameters(self) -> Dict[str, Any]:
        return {"f_s": self.f_s, "uncertainty": self.uncertainty}

    def info(self) -> str:
        return f"lowest mean + {self.f_s} sigma ({self.uncertainty} uncertainty)"


class PrunedStrategy(BaseStrategy):
    def __init__(self, inner: BaseStrategy, f_er: float, f_pr: float) -> None:
        """prune by estimation and plan risk, then select among the survivors with inner

        the inner scores are computed over every plan and restricted to the
        survivors, pruned plans score +inf

        Args:
            inner: RiskStrategy or ConservativeStrategy
            f_er: kept fraction by estimation risk in (0, 1]
            f_pr: kept fraction by plan risk in (0, 1]
        """
        for name, f in (("f_er", f_er), ("f_pr", f_pr)):
            if not 0.0 < f <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1], got {f}")
        self.inner = inner
        self.f_er = f_er
        self.f_pr = f_pr
        self.name = f"{inner.name}_prun"

    def survivors(self, dists: Sequence[CostDistribution]) -> List[int]:
        return prune(len(dists), [estimation_risk(d) for d in dists], [plan_risk(d) for d in dists],
                     self.f_er, self.f_pr)

    def scores(self, dists: Sequence[CostDistribution]) -> np.ndarray:
        inner = self.inner.scores(dists)
        out = np.full(len(dists), np.inf)
        keep = self.survivors(dists)
        out[keep] = inner[keep]
        return out

    def parameters(self) -> Dict[str, Any]:
        return {**self.inner.parameters(), "f_er": self.f_er, "f_pr": self.f_pr}

    def info(self) -> str:
        return f"{self.inner.info()} after keeping f_er={self.f_er}, f_pr={self.f_pr}"


def select_base(dists: Sequence[CostDistribution]) -> SelectionResult:
    return BaseStrategy().select(dists)


def select_by_sor(dists: Sequence[CostDistribution], uncertainty: Uncertainty = "total") -> SelectionResult:
    return RiskStrategy(uncertainty).select(dists)


def select_conservative(dists: Sequence[CostDistribution], f_s: float,
                        uncertainty: Uncertainty = "total") -> SelectionResult:
    return ConservativeStrategy(f_s, uncertainty).select(dists)


def strategy_from_tag(tag: str, f_s: float = 1.0, f_er: float = 1.0, f_pr: float = 1.0,
                      uncertainty: Uncertainty = "total") -> BaseStrategy:
    """build a strategy from its tag (base, risk, cons, risk_prun, cons_prun)"""
    if tag == "base":
        return BaseStrategy()
    if tag == "risk":
        return RiskStrategy(uncertainty)
    if tag == "cons":
        return ConservativeStrategy(f_s, uncertainty)
    if tag == "risk_prun":
        return PrunedStrategy(RiskStrategy(uncertainty), f_er, f_pr)
    if tag == "cons_prun":
        return PrunedStrategy(ConservativeStrategy(f_s, uncertainty), f_er, f_pr)
    raise ValidationError(f"unknown strategy {tag!r}, expected one of {', '.join(STRATEGY_TAGS)}")


def parameter_grid(tag: str, f_s_grid: Sequence[float] = F_S_GRID,
                   keep_grid: Sequence[float] = KEEP_FRACTION_GRID) -> List[Dict[str, float]]:
    """candidate parameters of a strategy, in search order"""
    if tag in ("base", "risk"):
        return [{}]
    if tag == "cons":
        return [{"f_s": f} for f in f_s_grid]
    if tag == "risk_prun":
        return [{"f_er": a, "f_pr": b} for a, b in itertools.product(keep_grid, keep_grid)]
    if tag == "cons_prun":
        return [{"f_s": f, "f_er": a, "f_pr": b} for f, a, b in itertools.product(f_s_grid, keep_grid, keep_grid)]
    raise ValidationError(f"unknown strategy {tag!r}, expected one of {', '.join(STRATEGY_TAGS)}")


def evaluate_choices(strategy: BaseStrategy, predictions: Sequence[Sequence[CostDistribution]]) -> List[int]:
    """index of the plan the strategy picks for every query"""
    return [strategy.select(dists).chosen for dists in predictions]


def tune_parameters(predictions: Sequence[Sequence[CostDistribution]], times: Sequence[Sequence[float]],
                    tag: str, uncertainty: Uncertainty = "total",
                    grid: Optional[Sequence[Dict[str, float]]] = None) -> Dict[str, float]:
    """grid search of a strategy's parameters on validation queries

    minimises the total runtime of the selected plans, then the 99th
    percentile suboptimality; the earliest grid entry wins remaining ties

    Args:
        predictions: per query, the distribution of every plan
        times: per query, the measured time of every plan
        tag: strategy tag
        uncertainty: variance component used by the strategy
        grid: candidate parameter sets, `parameter_grid(tag)` when omitted

    Returns:
        the best parameter set, always a member of the grid
    """
    if len(predictions) == 0:
        raise ValidationError("tuning needs at least one validation query")
    if len(predictions) != len(times):
        raise ValidationError(f"{len(predictions)} predicted and {len(times)} measured queries")
    grid = list(grid) if grid is not None else parameter_grid(tag)
    best: Optional[Dict[str, float]] = None
    best_key = (math.inf, math.inf)
    for params in grid:
        strategy = strategy_from_tag(tag, uncertainty=uncertainty, **params)
        chosen = evaluate_choices(strategy, predictions)
        runtime = sum(t[c] for t, c in zip(times, chosen))
        tail = percentile([suboptimality(t, c) for t, c in zip(times, chosen)], 99)
        key = (runtime, tail)
        if best is None or key < best_key:
            best, best_key = params, key
    logger.debug("tuned %s: %s (runtime %.3f, p99 subopt %.3f)", tag, best, *best_key)
    return dict(best)
