"""synthetic workloads with ground-truth execution times"""
import logging
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..models import SPLITS, Label, Workload, WorkloadSample
from ..utility import derive_seed
from .catalog import Catalog, GeneratorConfig, QueryTemplate, make_templates, sample_query
from .execution import apply_timeout, build_profile, node_cardinalities, simulate_execution
from .plans import enumerate_plans

logger = logging.getLogger(__name__)

# independent random streams derived from the master seed
_CATALOG, _TEMPLATES, _ASSIGNMENT, _QUERY, _PLANS, _NOISE = range(6)


def assign_splits(n: int, ratios: Sequence[float], rng: np.random.Generator) -> List[str]:
    """shuffle n items into train/validation/test with the given ratios"""
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    if n_train + n_val > n:
        n_val = n - n_train
    tags = ["train"] * n_train + ["validation"] * n_val + ["test"] * (n - n_train - n_val)
    order = rng.permutation(n)
    out = [""] * n
    for position, idx in enumerate(order):
        out[idx] = tags[position]
    return out


def _labels(sample_seed: int, query, errors, plans, template: QueryTemplate, query_idx: int) -> Tuple[Label, ...]:
    times = []
    for plan_idx, plan in enumerate(plans):
        profile = build_profile(query, plan, template.sensitivity, template.noise_fraction)
        true_cards, _ = node_cardinalities(query, plan, errors)
        times.append(simulate_execution(plan, profile, true_cards,
                                        derive_seed(sample_seed, _NOISE, query_idx, plan_idx)))
    labelled = apply_timeout(times)
    timeouts = sum(flag for _, flag in labelled)
    if timeouts:
        logger.debug("query %d: %d of %d plans timed out", query_idx, timeouts, len(plans))
    return tuple(Label(t, flag) for t, flag in labelled)


def generate_from_config(config: GeneratorConfig) -> Workload:
    """generate a workload, deterministic in config.seed

    queries are spread round robin over the templates (so every template
    appears once n_queries >= n_templates) and then shuffled into splits
    """
    seed = config.seed
    catalog = Catalog.random(config.catalog_size, np.random.default_rng(derive_seed(seed, _CATALOG)))
    templates = make_templates(config, catalog, np.random.default_rng(derive_seed(seed, _TEMPLATES)))

    assignment_rng = np.random.default_rng(derive_seed(seed, _ASSIGNMENT))
    template_of = assignment_rng.permutation([i % config.n_templates for i in range(config.n_queries)])
    splits = assign_splits(config.n_queries, config.split_ratios, assignment_rng)

    samples = []
    for query_idx in range(config.n_queries):
        template = templates[int(template_of[query_idx])]
        query, errors = sample_query(template, catalog,
                                     np.random.default_rng(derive_seed(seed, _QUERY, query_idx)))
        plans = enumerate_plans(query, derive_seed(seed, _PLANS, query_idx))
        labels = _labels(seed, query, errors, plans, template, query_idx)
        samples.append(WorkloadSample(query, tuple(plans), labels, splits[query_idx], template.template_id))
    workload = Workload(samples)
    logger.info("Generated workload with %d queries over %d templates (seed %d)",
                len(workload), config.n_templates, seed)
    return workload


def generate_workload(seed: int, n_queries: int, n_templates: int, catalog_size: int,
                      config: Optional[GeneratorConfig] = None) -> Workload:
    """generate a synthetic workload

    Args:
        seed: master seed, the output is identical for identical arguments
        n_queries: number of queries (>= 1)
        n_templates: number of structural templates (>= 1)
        catalog_size: number of tables in the synthetic catalog
        config: remaining generator settings, defaults otherwise

    Raises:
        ConfigurationError when the catalog is smaller than the largest template

    Returns:
        Workload
    """
    config = replace(config or GeneratorConfig(), seed=seed, n_queries=n_queries,
                     n_templates=n_templates, catalog_size=catalog_size)
    return generate_from_config(config)


CALIBRATION_LOG_MEANS = (0.0, 0.5)


def generate_calibration_workload(seed: int, n_queries: int,
                                  group_variances: Tuple[float, float] = (0.01, 0.04)) -> Workload:
    """two-group workload with known heteroscedastic noise

    even queries come from a two-table chain template (group 0) and odd
    queries from a three-table star template (group 1). Each query has its
    default plan only and log10 of its execution time is Gaussian with mean
    CALIBRATION_LOG_MEANS[g] and variance group_variances[g]. The template id
    of a sample is its group.
    """
    config = GeneratorConfig(n_queries=n_queries, n_templates=2, seed=seed)
    catalog = Catalog.random(config.catalog_size, np.random.default_rng(derive_seed(seed, _CATALOG)))
    common = dict(has_aggregate=False, selectivity_exponents=(-2.0, -1.0), correlation_range=(0.2, 0.4),
                  skew_range=(0.0, 0.5), noise_fraction=0.0, sensitivity=1.0)
    templates = (
        QueryTemplate(0, "chain", (0, 1), ((0, 1),), **common),
        QueryTemplate(1, "star", (2, 3, 4), ((0, 1), (0, 2)), **common),
    )
    splits = assign_splits(n_queries, config.split_ratios, np.random.default_rng(derive_seed(seed, _ASSIGNMENT)))
    samples = []
    for query_idx in range(n_queries):
        group = query_idx % 2
        rng = np.random.default_rng(derive_seed(seed, _QUERY, query_idx))
        query, _ = sample_query(templates[group], catalog, rng)
        plan = enumerate_plans(query, derive_seed(seed, _PLANS, query_idx))[0]
        log_time = CALIBRATION_LOG_MEANS[group] + rng.normal(0.0, np.sqrt(group_variances[group]))
        samples.append(WorkloadSample(query, (plan,), (Label(float(10 ** log_time), False),),
                                      splits[query_idx], group))
    return Workload(samples)


__all__ = ["SPLITS", "assign_splits", "generate_workload", "generate_from_config",
           "generate_calibration_workload"]
