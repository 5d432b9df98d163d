import math

import numpy as np
import pytest
from scipy import integrate, stats

from src.bench import generate_workload
from src.costmodel import ModelConfig, train
from src.models import (CostDistribution, JoinEdge, Label, PlanNode, PlanTree, QueryGlobals, QueryGraph, TableNode,
                        WorkloadSample)

TINY_CONFIG = ModelConfig(graph_layers=1, tree_layers=1, hidden=8, dropout=0.1, learning_rate=5e-3,
                          batch_size=64, max_epochs=3, patience=3, plateau_patience=2, mc_iterations=5)


def dist(mean, data_variance=0.0, model_variance=0.0):
    return CostDistribution.from_components(mean, data_variance, model_variance)


def quadrature_risk(mu_x, var_x, mu_y, var_y):
    """P(X > Y) for independent gaussians: the integral of pdf_X(x) * cdf_Y(x)"""
    sx, sy = math.sqrt(var_x), math.sqrt(var_y)
    value, _ = integrate.quad(lambda x: stats.norm.pdf(x, mu_x, sx) * stats.norm.cdf(x, mu_y, sy),
                              mu_x - 12 * sx, mu_x + 12 * sx, epsabs=1e-12, limit=200)
    return value


def chain_query():
    nodes = (TableNode(1000.0, 0.1, 0.2, 3), TableNode(500.0, 0.5, 0.1, 7))
    edges = (JoinEdge(0, 1, "inner", "eq", 0.001, 0.2),)
    return QueryGraph(nodes, edges, QueryGlobals(2, 1, "chain"))


def chain_plan(join="hash-join"):
    return PlanTree((PlanNode("table-scan", (3,)), PlanNode("index-scan", (7,)),
                     PlanNode(join, (3, 7), 0, 1)), 2)


def chain_sample(split="train", template_id=0, times=(0.5, 0.8)):
    plans = (chain_plan("hash-join"), chain_plan("nested-loops-join"))
    labels = tuple(Label(t, False) for t in times)
    return WorkloadSample(chain_query(), plans, labels, split, template_id)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def tiny_workload():
    return generate_workload(seed=3, n_queries=40, n_templates=4, catalog_size=24)


@pytest.fixture(scope="session")
def tiny_model(tiny_workload):
    model, _ = train(tiny_workload, TINY_CONFIG, seed=5)
    return model


@pytest.fixture(scope="session")
def stock_workload():
    return generate_workload(seed=1, n_queries=1000, n_templates=15, catalog_size=24)
