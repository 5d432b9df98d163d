"""operator cost formulas, execution simulation and the label timeout rule"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from ..models import PlanTree, QueryGraph
from .catalog import CardinalityErrors

logger = logging.getLogger(__name__)

ROW_COST = 1e-6
"""seconds per unit of operator work"""
MIN_TIME = 1e-3
"""executions never report less than this many seconds"""
TIMEOUT_FACTOR = 10


def estimated_rows(query: QueryGraph, node_indices: Sequence[int]) -> float:
    """independence-assumption cardinality of the join over a set of query tables"""
    rows = 1.0
    for idx in node_indices:
        node = query.nodes[idx]
        rows *= node.rows * node.selectivity
    for edge in query.edges_within(node_indices):
        rows *= edge.selectivity
    return max(rows, 1.0)


def true_rows(query: QueryGraph, errors: CardinalityErrors, node_indices: Sequence[int]) -> float:
    """cardinality once the hidden per-table and per-join errors are compounded"""
    rows = estimated_rows(query, node_indices)
    inside = set(node_indices)
    for idx in node_indices:
        rows *= errors.table_factors[idx]
    for e_idx, edge in enumerate(query.edges):
        if edge.left in inside and edge.right in inside:
            rows *= errors.edge_factors[e_idx]
    return max(rows, 1.0)


def operator_work(operator: str, out_rows: float, left_rows: float = 0.0,
                  right_rows: float = 0.0, base_rows: float = 0.0) -> float:
    """abstract work of one operator given its input and output cardinalities

    nested loops grows with the product of its inputs and is therefore the
    operator most exposed to cardinality errors
    """
    if operator == "table-scan":
        return base_rows + 0.1 * out_rows
    if operator == "index-scan":
        return 4.0 * out_rows + 20.0
    if operator == "hash-join":
        return 2.0 * right_rows + left_rows + 0.5 * out_rows
    if operator == "merge-join":
        return 0.3 * (left_rows * math.log2(left_rows + 2) + right_rows * math.log2(right_rows + 2)) + 0.5 * out_rows
    if operator == "nested-loops-join":
        return 1e-3 * left_rows * right_rows + 2.0 * left_rows + 0.5 * out_rows
    if operator == "group-aggregate":
        return left_rows + 0.5 * out_rows
    raise ValidationError(f"unknown operator {operator!r}")


def plan_work(plan: PlanTree, rows: Sequence[float], base_rows: Sequence[float]) -> float:
    """total work of a plan for given per-node output cardinalities"""
    total = 0.0
    for idx, node in enumerate(plan.nodes):
        left = rows[node.left] if node.left is not None else 0.0
        right = rows[node.right] if node.right is not None else 0.0
        total += operator_work(node.operator, rows[idx], left, right, base_rows[idx])
    return total


def _node_query_indices(query: QueryGraph, plan: PlanTree) -> List[List[int]]:
    return [[query.node_index(t) for t in node.tables] for node in plan.nodes]


def node_cardinalities(query: QueryGraph, plan: PlanTree,
                       errors: Optional[CardinalityErrors] = None) -> Tuple[List[float], List[float]]:
    """per-node output rows of a plan and the base rows read by its access nodes

    with errors=None the optimizer estimates are returned, otherwise the true rows

    Returns:
        rows per node, base table rows per node (0 for non access nodes)
    """
    rows: List[float] = [0.0] * len(plan.nodes)
    base: List[float] = [0.0] * len(plan.nodes)
    for idx, members in zip(range(len(plan.nodes)), _node_query_indices(query, plan)):
        node = plan.nodes[idx]
        if errors is None:
            rows[idx] = estimated_rows(query, members)
        else:
            rows[idx] = true_rows(query, errors, members)
        if node.is_leaf:
            base[idx] = query.nodes[members[0]].rows
    # aggregates emit one row per group, approximated by the square root of their input
    for idx in plan.postorder():
        node = plan.nodes[idx]
        if node.operator == "group-aggregate" and node.left is not None:
            rows[idx] = max(math.sqrt(rows[node.left]), 1.0)
    return rows, base


@dataclass(frozen=True)
class PlanCostProfile:
    """how a plan turns cardinalities into execution time

    base_cost is the estimated cost in seconds, sensitivity scales the cost
    change caused by cardinality errors (the slope of the cost function) and
    noise_scale is the standard deviation of the run-to-run noise
    """
    base_cost: float
    sensitivity: float
    noise_scale: float
    estimated_rows: Tuple[float, ...]
    base_rows: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.base_cost > 0:
            raise ValidationError(f"base cost must be > 0, got {self.base_cost}")
        if self.noise_scale < 0 or self.sensitivity < 0:
            raise ValidationError("noise scale and sensitivity must be >= 0")
        if len(self.estimated_rows) != len(self.base_rows):
            raise ValidationError("estimated_rows and base_rows must align with the plan nodes")


def build_profile(query: QueryGraph, plan: PlanTree, sensitivity: float, noise_fraction: float) -> PlanCostProfile:
    """cost profile of a plan from the optimizer estimates

    noise grows with the estimated cost and with the number of nested loops joins
    """
    rows, base = node_cardinalities(query, plan)
    base_cost = max(plan_work(plan, rows, base) * ROW_COST, MIN_TIME)
    nl_joins = plan.operator_counts()["nested-loops-join"]
    noise_scale = noise_fraction * base_cost * (1.0 + 0.5 * nl_joins)
    return PlanCostProfile(base_cost, sensitivity, noise_scale, tuple(rows), tuple(base))


def cardinality_error_term(plan: PlanTree, profile: PlanCostProfile, true_cardinalities: Sequence[float]) -> float:
    """cost difference in seconds between true and estimated cardinalities"""
    if len(true_cardinalities) != len(plan.nodes):
        raise ValidationError(
            f"{len(true_cardinalities)} cardinalities given for a plan of {len(plan.nodes)} nodes")
    true_work = plan_work(plan, true_cardinalities, profile.base_rows)
    est_work = plan_work(plan, profile.estimated_rows, profile.base_rows)
    return (true_work - est_work) * ROW_COST


def simulate_execution(plan: PlanTree, profile: PlanCostProfile,
                       true_cardinalities: Sequence[float], seed: int) -> float:
    """simulated execution time of a plan in seconds

    time = base cost + sensitivity * cardinality error term + N(0, noise_scale^2),
    clamped to at least MIN_TIME

    Args:
        plan: PlanTree
        profile: PlanCostProfile of the plan
        true_cardinalities: true output rows per plan node
        seed: noise seed

    Returns:
        execution time [s]
    """
    time = profile.base_cost
    if profile.sensitivity:
        time += profile.sensitivity * cardinality_error_term(plan, profile, true_cardinalities)
    if profile.noise_scale > 0:
        time += float(np.random.default_rng(seed).normal(0.0, profile.noise_scale))
    return max(time, MIN_TIME)


def apply_timeout(times_in_arrival_order: Sequence[float]) -> List[Tuple[float, bool]]:
    """truncate executions that exceed the running timeout

    the timeout is 10 times the best time seen so far rounded up to the next
    integer; the first execution has no best so far and is never truncated

    Usage:
        >>> apply_timeout([0.42, 9.0])
        [(0.42, False), (5.0, True)]

    Returns:
        (seconds, timed_out) per execution
    """
    out: List[Tuple[float, bool]] = []
    best = math.inf
    for time in times_in_arrival_order:
        if not time > 0:
            raise ValidationError(f"execution times must be > 0, got {time}")
        if best < math.inf:
            threshold = float(math.ceil(TIMEOUT_FACTOR * best))
            if time > threshold:
                logger.warning("execution of %.3fs timed out at %.0fs", time, threshold)
                out.append((threshold, True))
                continue
        out.append((float(time), False))
        best = min(best, time)
    return out
