"""feature extraction, min-max scaling and the label transform

all statistics come from the training split only; other splits are scaled
with them, so values outside the training range map outside [0, 1]
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
from typing_extensions import Self

from ..errors import ValidationError
from ..models import (JOIN_TYPES, OPERATORS, PREDICATE_OPERATORS, TOPOLOGIES, PlanTree, QueryGraph,
                      WorkloadSample, one_hot)

MIN_JOIN_SELECTIVITY = 1e-12


def node_numeric(query: QueryGraph) -> np.ndarray:
    """[log10(rows + 1), selectivity, correlation] per table"""
    return np.array([[math.log10(n.rows + 1.0), n.selectivity, n.correlation] for n in query.nodes],
                    dtype=np.float64).reshape(-1, 3)


def edge_numeric(query: QueryGraph) -> np.ndarray:
    """[log10 join selectivity, skew] per join"""
    return np.array([[math.log10(max(e.selectivity, MIN_JOIN_SELECTIVITY)), e.skew] for e in query.edges],
                    dtype=np.float64).reshape(-1, 2)


def global_numeric(query: QueryGraph) -> np.ndarray:
    """[table count, join count]"""
    return np.array([query.globals.table_count, query.globals.join_count], dtype=np.float64)


def minmax(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """(v - lo) / (hi - lo), columns with hi == lo map to 0, no clipping

    Usage:
        >>> minmax(np.array([0.0, 5.0, 10.0]), 0.0, 10.0)
        array([0. , 0.5, 1. ])
    """
    values = np.asarray(values, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    span = np.asarray(hi, dtype=np.float64) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - lo) / safe, 0.0)


def _range(blocks: List[np.ndarray], width: int):
    stacked = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, width))
    if stacked.shape[0] == 0:
        return np.zeros(width), np.zeros(width)
    return stacked.min(axis=0), stacked.max(axis=0)


@dataclass(frozen=True)
class EncodedQuery:
    nodes: np.ndarray
    edges: np.ndarray
    graph: np.ndarray
    pairs: tuple


@dataclass(frozen=True)
class EncodedPlan:
    operators: np.ndarray
    node_tables: tuple
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class PreprocessStats:
    """per-feature ranges and the log10 label range of the training split"""
    node_min: np.ndarray
    node_max: np.ndarray
    edge_min: np.ndarray
    edge_max: np.ndarray
    global_min: np.ndarray
    global_max: np.ndarray
    label_log_min: float
    label_log_max: float
    n_tables: int

    @property
    def node_dim(self) -> int:
        return 3 + self.n_tables

    @property
    def edge_dim(self) -> int:
        return 2 + len(JOIN_TYPES) + len(PREDICATE_OPERATORS)

    @property
    def global_dim(self) -> int:
        return 2 + len(TOPOLOGIES) + 1

    def transform_label(self, seconds) -> np.ndarray:
        """log10 then min-max over the training label range

        Raises:
            ValidationError on non-positive times
        """
        seconds = np.asarray(seconds, dtype=np.float64)
        if np.any(seconds <= 0):
            raise ValidationError("execution times must be > 0 to take log10")
        return minmax(np.log10(seconds), self.label_log_min, self.label_log_max)

    def inverse_label(self, transformed) -> np.ndarray:
        """transformed label back to seconds"""
        span = self.label_log_max - self.label_log_min
        return 10.0 ** (np.asarray(transformed, dtype=np.float64) * span + self.label_log_min)

    def encode_query(self, query: QueryGraph) -> EncodedQuery:
        """scaled node, edge and graph features of a join graph"""
        tables = np.zeros((len(query.nodes), self.n_tables))
        for idx, node in enumerate(query.nodes):
            # tables outside the training catalog get no identity column
            if 0 <= node.table_id < self.n_tables:
                tables[idx, node.table_id] = 1.0
        nodes = np.concatenate([minmax(node_numeric(query), self.node_min, self.node_max), tables], axis=1)
        edge_cat = np.array([one_hot(e.join_type, JOIN_TYPES) + one_hot(e.operator, PREDICATE_OPERATORS)
                             for e in query.edges], dtype=np.float64).reshape(-1, len(JOIN_TYPES) + len(PREDICATE_OPERATORS))
        edges = np.concatenate([minmax(edge_numeric(query), self.edge_min, self.edge_max), edge_cat], axis=1)
        graph = np.concatenate([minmax(global_numeric(query), self.global_min, self.global_max),
                                one_hot(query.globals.topology, TOPOLOGIES),
                                [1.0 if query.globals.has_aggregate else 0.0]])
        pairs = tuple((e.left, e.right) for e in query.edges)
        return EncodedQuery(nodes, edges, graph, pairs)

    def to_dict(self) -> Dict[str, Any]:
        return {"node_min": self.node_min.tolist(), "node_max": self.node_max.tolist(),
                "edge_min": self.edge_min.tolist(), "edge_max": self.edge_max.tolist(),
                "global_min": self.global_min.tolist(), "global_max": self.global_max.tolist(),
                "label_log_min": self.label_log_min, "label_log_max": self.label_log_max,
                "n_tables": self.n_tables}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        arrays = {k: np.asarray(data[k], dtype=np.float64)
                  for k in ("node_min", "node_max", "edge_min", "edge_max", "global_min", "global_max")}
        return cls(**arrays, label_log_min=float(data["label_log_min"]),
                   label_log_max=float(data["label_log_max"]), n_tables=int(data["n_tables"]))


def fit_preprocess(train: Sequence[WorkloadSample], n_tables: int = 0) -> PreprocessStats:
    """feature and label statistics of the training samples

    Args:
        train: training samples (at least 2)
        n_tables: width of the table identity one-hot, at least the largest
            training table id + 1

    Raises:
        ValidationError with fewer than 2 samples or a non-positive label
    """
    train = list(train)
    if len(train) < 2:
        raise ValidationError(f"preprocessing needs at least 2 training samples, got {len(train)}")
    times = np.array([t for s in train for t in s.times], dtype=np.float64)
    if np.any(times <= 0):
        raise ValidationError("execution times must be > 0 to take log10")
    node_min, node_max = _range([node_numeric(s.query) for s in train], 3)
    edge_min, edge_max = _range([edge_numeric(s.query) for s in train], 2)
    global_min, global_max = _range([global_numeric(s.query)[None, :] for s in train], 2)
    largest = max(t for s in train for t in s.query.table_ids)
    logs = np.log10(times)
    return PreprocessStats(node_min, node_max, edge_min, edge_max, global_min, global_max,
                           float(logs.min()), float(logs.max()), max(n_tables, largest + 1))


def encode_plan(plan: PlanTree, query: QueryGraph) -> EncodedPlan:
    """operator one-hot rows and the query nodes below every plan node

    Raises:
        ValidationError when the plan references a table absent from the query
    """
    operators = np.array([node.one_hot for node in plan.nodes], dtype=np.float64).reshape(-1, len(OPERATORS))
    node_tables = tuple(tuple(query.node_index(t) for t in node.tables) for node in plan.nodes)
    left = np.array([-1 if n.left is None else n.left for n in plan.nodes], dtype=np.int64)
    right = np.array([-1 if n.right is None else n.right for n in plan.nodes], dtype=np.int64)
    return EncodedPlan(operators, node_tables, left, right)
