"""linear parametric cost functions and the decomposition of their cost variance

for a cost f(x) = a*x + b with uncertain parameters (a, b) and an error prone
input cardinality x, the law of total variance splits Var(f) into a term driven
by the cardinality error (plan risk) and a term driven by the parameter
uncertainty (estimation risk)
"""
import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from ..errors import ValidationError


class VarianceDecomposition(NamedTuple):
    data_term: float
    model_term: float
    total: float


@dataclass(frozen=True)
class LinearPCF:
    """f(x) = a*x + b with a ~ N(mu_a, sigma_a^2), b ~ N(mu_b, sigma_b^2), Cov(a, b) = cov_ab
    and x ~ N(mu_x, sigma_x^2) independent of (a, b)
    """
    mu_a: float
    sigma_a: float
    mu_b: float
    sigma_b: float
    cov_ab: float
    mu_x: float
    sigma_x: float

    def __post_init__(self) -> None:
        if self.sigma_a < 0 or self.sigma_b < 0 or self.sigma_x < 0:
            raise ValidationError("sigma_a, sigma_b and sigma_x must be >= 0")
        if abs(self.cov_ab) > self.sigma_a * self.sigma_b * (1 + 1e-12):
            raise ValidationError(
                f"|cov_ab|={abs(self.cov_ab)} exceeds sigma_a*sigma_b={self.sigma_a * self.sigma_b}")

    def __call__(self, x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * x + b

    def sample_parameters(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """draw n correlated (a, b) pairs"""
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        a = self.mu_a + self.sigma_a * z1
        if self.sigma_a > 0:
            loading = self.cov_ab / self.sigma_a
            residual = math.sqrt(max(self.sigma_b ** 2 - loading ** 2, 0.0))
        else:
            loading, residual = 0.0, self.sigma_b
        b = self.mu_b + loading * z1 + residual * z2
        return a, b

    def sample_inputs(self, rng: np.random.Generator, shape) -> np.ndarray:
        return self.mu_x + self.sigma_x * rng.standard_normal(shape)

    def info(self) -> str:
        return (f"f(x) = a*x + b, a~N({self.mu_a}, {self.sigma_a}^2), b~N({self.mu_b}, {self.sigma_b}^2), "
                f"cov(a,b)={self.cov_ab}, x~N({self.mu_x}, {self.sigma_x}^2)")


def decompose_variance_closed_form(pcf: LinearPCF) -> VarianceDecomposition:
    """analytic split of Var(f) for a linear cost function

    data term = sigma_x^2 (mu_a^2 + sigma_a^2), the cardinality error scaled by the slope
    model term = mu_x^2 sigma_a^2 + sigma_b^2 + 2 mu_x Cov(a, b)

    Usage:
        >>> decompose_variance_closed_form(LinearPCF(2, 0.5, 1, 0.3, 0, 5, 1))
        VarianceDecomposition(data_term=4.25, model_term=6.34, total=10.59)
    """
    data_term = pcf.sigma_x ** 2 * (pcf.mu_a ** 2 + pcf.sigma_a ** 2)
    model_term = pcf.mu_x ** 2 * pcf.sigma_a ** 2 + pcf.sigma_b ** 2 + 2 * pcf.mu_x * pcf.cov_ab
    return VarianceDecomposition(data_term, model_term, data_term + model_term)


def decompose_variance_monte_carlo(pcf: LinearPCF, n_samples: int, seed: int,
                                   inner: int = 10) -> VarianceDecomposition:
    """estimate both terms of the law of total variance by nested sampling

    parameters (a, b) are drawn in an outer loop and cardinalities x in an
    inner loop of `inner` draws each, for n_samples evaluations in total.
    The spread of the inner means carries the inner sampling noise, which is
    removed with the usual between-group correction. `total` is the plain
    variance of f over n_samples independent joint draws, so
    data_term + model_term ~= total checks the decomposition itself.

    Args:
        pcf: LinearPCF
        n_samples: number of cost evaluations (>= 10^4)
        seed: random seed
        inner: inner loop size

    Returns:
        VarianceDecomposition
    """
    if n_samples < 10_000:
        raise ValidationError(f"n_samples must be >= 10^4, got {n_samples}")
    if inner < 2:
        raise ValidationError("inner loop needs at least 2 draws")
    rng = np.random.default_rng(seed)
    outer = n_samples // inner

    a, b = pcf.sample_parameters(rng, outer)
    x = pcf.sample_inputs(rng, (outer, inner))
    f = pcf(x, a[:, None], b[:, None])

    within = f.var(axis=1, ddof=1)
    data_term = float(within.mean())
    model_term = float(f.mean(axis=1).var(ddof=1) - data_term / inner)

    a_joint, b_joint = pcf.sample_parameters(rng, n_samples)
    x_joint = pcf.sample_inputs(rng, n_samples)
    total = float(pcf(x_joint, a_joint, b_joint).var(ddof=1))
    return VarianceDecomposition(data_term, model_term, total)
