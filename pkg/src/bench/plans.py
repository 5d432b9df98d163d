"""candidate plan enumeration: a greedy optimizer re-run under operator hint sets"""
import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from ..errors import ValidationError
from ..models import JOIN_OPERATORS, OPERATORS, PlanNode, PlanTree, QueryGraph
from .execution import estimated_rows, operator_work

logger = logging.getLogger(__name__)

HINT_SETS: Tuple[FrozenSet[str], ...] = tuple(frozenset(h) for h in (
    {"nljn"}, {"nljn", "iscan"},
    {"hsjn"}, {"hsjn", "iscan"},
    {"mgjn"}, {"mgjn", "iscan"},
    {"nljn", "mgjn"}, {"nljn", "mgjn", "iscan"},
    {"nljn", "hsjn"}, {"nljn", "hsjn", "iscan"},
    {"mgjn", "hsjn"}, {"mgjn", "hsjn", "iscan"},
))
"""operators disabled by each hint set, in the order they are applied"""

HINT_OPERATORS = {
    "nljn": "nested-loops-join",
    "hsjn": "hash-join",
    "mgjn": "merge-join",
    "iscan": "index-scan",
}

COST_JITTER = 0.1
"""log-space spread of the optimizer's cost noise, seeded per query"""


def allowed_operators(disabled: FrozenSet[str]) -> FrozenSet[str]:
    return frozenset(OPERATORS) - {HINT_OPERATORS[h] for h in disabled}


@dataclass
class _SubPlan:
    """partial plan built bottom up by the greedy optimizer"""
    operator: str
    members: Tuple[int, ...]
    rows: float
    work: float
    left: Optional["_SubPlan"] = None
    right: Optional["_SubPlan"] = None


def _access_plan(query: QueryGraph, idx: int, allowed: FrozenSet[str], jitter) -> _SubPlan:
    node = query.nodes[idx]
    rows = estimated_rows(query, [idx])
    best = None
    for operator in ("table-scan", "index-scan"):
        if operator not in allowed:
            continue
        cost = operator_work(operator, rows, base_rows=node.rows) * jitter()
        if best is None or cost < best[0]:
            best = (cost, operator)
    if best is None:
        # table scans are never disabled by a hint set
        best = (operator_work("table-scan", rows, base_rows=node.rows), "table-scan")
    return _SubPlan(best[1], (idx,), rows, best[0])


def _connected(query: QueryGraph, a: _SubPlan, b: _SubPlan) -> bool:
    left, right = set(a.members), set(b.members)
    return any((e.left in left and e.right in right) or (e.left in right and e.right in left)
               for e in query.edges)


def _greedy_plan(query: QueryGraph, allowed: FrozenSet[str], rng: np.random.Generator) -> _SubPlan:
    def jitter() -> float:
        return float(np.exp(rng.normal(0.0, COST_JITTER)))

    parts = [_access_plan(query, idx, allowed, jitter) for idx in range(len(query.nodes))]
    join_ops = [op for op in OPERATORS if op in JOIN_OPERATORS and op in allowed]
    while len(parts) > 1:
        best = None
        for i, a in enumerate(parts):
            for j, b in enumerate(parts):
                if i == j or not _connected(query, a, b):
                    continue
                members = tuple(sorted(a.members + b.members))
                rows = estimated_rows(query, members)
                for operator in join_ops:
                    work = a.work + b.work + operator_work(operator, rows, a.rows, b.rows) * jitter()
                    if best is None or work < best[0]:
                        best = (work, i, j, operator, members, rows)
        if best is None:
            raise ValidationError("query graph is disconnected, no join order covers every table")
        work, i, j, operator, members, rows = best
        joined = _SubPlan(operator, members, rows, work, parts[i], parts[j])
        parts = [p for k, p in enumerate(parts) if k not in (i, j)] + [joined]
    plan = parts[0]
    if query.globals.has_aggregate:
        plan = _SubPlan("group-aggregate", plan.members, max(plan.rows ** 0.5, 1.0),
                        plan.work + operator_work("group-aggregate", 1.0, plan.rows), plan)
    return plan


def _to_tree(query: QueryGraph, root: _SubPlan) -> PlanTree:
    nodes: List[PlanNode] = []

    def emit(sub: _SubPlan) -> int:
        left = emit(sub.left) if sub.left is not None else None
        right = emit(sub.right) if sub.right is not None else None
        tables = tuple(sorted(query.nodes[m].table_id for m in sub.members))
        nodes.append(PlanNode(sub.operator, tables, left, right))
        return len(nodes) - 1

    root_idx = emit(root)
    return PlanTree(tuple(nodes), root_idx)


def enumerate_plans(query: QueryGraph, seed: int) -> List[PlanTree]:
    """candidate plans of a query: the default plan followed by one plan per hint set

    every plan is built by the same greedy, cost ordered join enumeration
    (cheapest connected pair first) with the hint set's operators disabled.
    Structural duplicates are dropped, keeping the first occurrence.

    Args:
        query: connected QueryGraph
        seed: seed of the optimizer's cost noise

    Returns:
        list of distinct PlanTree, default plan first
    """
    if not query.is_connected():
        raise ValidationError("query graph is disconnected")
    needs_joins = len(query.nodes) > 1
    plans: List[PlanTree] = []
    seen = set()
    for hint_idx, disabled in enumerate((frozenset(),) + HINT_SETS):
        allowed = allowed_operators(disabled)
        if needs_joins and not (allowed & JOIN_OPERATORS):
            logger.warning("hint set %s disables every join operator, skipped", sorted(disabled))
            continue
        rng = np.random.default_rng([seed, hint_idx])
        plan = _to_tree(query, _greedy_plan(query, allowed, rng))
        signature = plan.signature()
        if signature in seen:
            logger.debug("hint set %s repeats an earlier plan", sorted(disabled))
            continue
        seen.add(signature)
        plans.append(plan)
    return plans
