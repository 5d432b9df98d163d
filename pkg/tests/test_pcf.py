import numpy as np
import pytest

from src.bench import LinearPCF, decompose_variance_closed_form, decompose_variance_monte_carlo
from src.errors import ValidationError


def random_pcf(rng):
    sigma_a = rng.uniform(0.3, 1.0)
    sigma_b = rng.uniform(0.2, 1.0)
    rho = rng.uniform(-0.3, 0.3)
    return LinearPCF(mu_a=rng.uniform(0.5, 1.5), sigma_a=sigma_a, mu_b=rng.uniform(0.0, 2.0), sigma_b=sigma_b,
                     cov_ab=rho * sigma_a * sigma_b, mu_x=rng.uniform(3.0, 8.0), sigma_x=rng.uniform(0.3, 0.8))


class TestClosedForm:
    def test_worked_example(self):
        out = decompose_variance_closed_form(LinearPCF(2, 0.5, 1, 0.3, 0, 5, 1))
        assert out.data_term == pytest.approx(4.25)
        assert out.model_term == pytest.approx(6.34)
        assert out.total == pytest.approx(10.59)

    def test_certain_parameters_leave_only_data_term(self):
        out = decompose_variance_closed_form(LinearPCF(2, 0, 1, 0, 0, 5, 1))
        assert out.model_term == 0.0
        assert out.data_term == pytest.approx(4.0)

    def test_invalid_covariance(self):
        with pytest.raises(ValidationError):
            LinearPCF(2, 0.5, 1, 0.3, 0.2, 5, 1)


class TestMonteCarlo:
    @pytest.mark.slow
    def test_matches_closed_form(self):
        rng = np.random.default_rng(2024)
        for trial in range(20):
            pcf = random_pcf(rng)
            exact = decompose_variance_closed_form(pcf)
            estimate = decompose_variance_monte_carlo(pcf, n_samples=2_000_000, seed=trial)
            assert estimate.data_term == pytest.approx(exact.data_term, rel=0.02), pcf.info()
            assert estimate.model_term == pytest.approx(exact.model_term, rel=0.02), pcf.info()
            assert estimate.total == pytest.approx(exact.total, rel=0.02), pcf.info()

    def test_terms_add_up_to_total(self):
        pcf = LinearPCF(2, 0.5, 1, 0.3, 0.05, 5, 1)
        out = decompose_variance_monte_carlo(pcf, n_samples=1_000_000, seed=3)
        assert out.data_term + out.model_term == pytest.approx(out.total, rel=0.02)

    def test_deterministic(self):
        pcf = LinearPCF(2, 0.5, 1, 0.3, 0, 5, 1)
        assert decompose_variance_monte_carlo(pcf, 10_000, seed=9) == decompose_variance_monte_carlo(pcf, 10_000, seed=9)

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            decompose_variance_monte_carlo(LinearPCF(2, 0.5, 1, 0.3, 0, 5, 1), n_samples=9_999, seed=1)
