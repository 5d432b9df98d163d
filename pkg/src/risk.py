"""suboptimality risk of plans with gaussian cost distributions

costs of different plans are treated as independent, the covariance term
of their difference is taken as 0
"""
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .models import CostDistribution, Uncertainty


def normal_cdf(z):
    """standard normal cumulative distribution function

    evaluated with scipy.special.ndtr (the Cephes implementation, built on
    erf/erfc), accurate to about 1e-16 absolute

    Usage:
        >>> normal_cdf(0.0)
        0.5
    """
    out = ndtr(z)
    return float(out) if np.ndim(out) == 0 else out


def z_score(mu_x: float, var_x: float, mu_y: float, var_y: float) -> float:
    """(mu_y - mu_x) / sqrt(var_x + var_y), infinite for point masses with different means"""
    if var_x < 0 or var_y < 0:
        raise ValidationError(f"variances must be >= 0, got {var_x} and {var_y}")
    spread = math.sqrt(var_x + var_y)
    if spread == 0:
        if mu_x == mu_y:
            return 0.0
        return math.inf if mu_y > mu_x else -math.inf
    return (mu_y - mu_x) / spread


def pairwise_risk(mu_x: float, var_x: float, mu_y: float, var_y: float) -> float:
    """risk of picking plan X over plan Y, P(C(X) - C(Y) > 0)

    with independent gaussian costs this is normal_cdf(-z) for
    z = (mu_y - mu_x) / sqrt(var_x + var_y). Two point masses give 0, 1
    or 0.5 for equal means.

    Usage:
        >>> round(pairwise_risk(8, 1, 10, 1), 4)
        0.0786
    """
    z = z_score(mu_x, var_x, mu_y, var_y)
    if math.isinf(z):
        return 0.0 if z > 0 else 1.0
    return normal_cdf(-z)


@dataclass(frozen=True)
class RiskMatrix:
    """pairwise risks of n plans

    D[i, j] = mu_i - mu_j, S[i, j] = sqrt(var_i + var_j), Z = -D / S
    (element-wise) and R[i, j] = normal_cdf(-Z[i, j]) = P(C_i > C_j).
    The diagonal of R is 0.5 and never enters SOR.
    """
    D: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def info(self) -> str:
        return f"risk matrix over {self.n} plans"


def build_risk_matrix(dists: Sequence[CostDistribution], uncertainty: Uncertainty = "total") -> RiskMatrix:
    """materialise D, S, Z and R for a set of plans

    Args:
        dists: predicted cost distribution per plan (at least 2)
        uncertainty: variance component used as sigma^2 (data, model or total)

    Raises:
        ValidationError with fewer than 2 plans
    """
    if len(dists) < 2:
        raise ValidationError(f"a risk matrix needs at least 2 plans, got {len(dists)}")
    mu = np.array([d.mean for d in dists], dtype=np.float64)
    var = np.array([d.variance(uncertainty) for d in dists], dtype=np.float64)
    D = mu[:, None] - mu[None, :]
    S = np.sqrt(var[:, None] + var[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        Z = np.where(S > 0, -D / np.where(S > 0, S, 1.0), -np.sign(D) * np.inf)
    # point masses with equal means
    Z = np.where((S == 0) & (D == 0), 0.0, Z)
    R = ndtr(-Z)
    return RiskMatrix(D, S, Z, R)


def sor(matrix: RiskMatrix) -> np.ndarray:
    """suboptimality risk of every plan, the mean of its row of R without the diagonal"""
    n = matrix.n
    return (matrix.R.sum(axis=1) - np.diag(matrix.R)) / (n - 1)


def sor_values(dists: Sequence[CostDistribution], uncertainty: Uncertainty = "total") -> np.ndarray:
    return sor(build_risk_matrix(dists, uncertainty))


def sor_scalar(dists: Sequence[CostDistribution], uncertainty: Uncertainty = "total") -> List[float]:
    """SOR by one pairwise_risk call per pair, the reference for the vectorised path"""
    n = len(dists)
    if n < 2:
        raise ValidationError(f"SOR needs at least 2 plans, got {n}")
    out = []
    for i, x in enumerate(dists):
        total = sum(pairwise_risk(x.mean, x.variance(uncertainty), y.mean, y.variance(uncertainty))
                    for j, y in enumerate(dists) if j != i)
        out.append(total / (n - 1))
    return out


def plan_risk(dist: CostDistribution) -> float:
    """risk inherent to the plan: its data variance"""
    return dist.data_variance


def estimation_risk(dist: CostDistribution) -> float:
    """risk from limited knowledge of the model: its model variance"""
    return dist.model_variance
