"""contains the domain model shared by every other module: queries, plans, cost distributions and workload samples"""
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Sequence, Tuple

from typing_extensions import Self

from .errors import ValidationError

OPERATORS: Tuple[str, ...] = (
    "table-scan",
    "index-scan",
    "nested-loops-join",
    "hash-join",
    "merge-join",
    "group-aggregate",
)
ACCESS_OPERATORS = frozenset({"table-scan", "index-scan"})
JOIN_OPERATORS = frozenset({"nested-loops-join", "hash-join", "merge-join"})
UNARY_OPERATORS = frozenset({"group-aggregate"})

JOIN_TYPES: Tuple[str, ...] = ("inner", "left-outer", "semi")
PREDICATE_OPERATORS: Tuple[str, ...] = ("eq", "lt", "gt")
TOPOLOGIES: Tuple[str, ...] = ("chain", "star", "cycle", "clique-like")
SPLITS: Tuple[str, ...] = ("train", "validation", "test")

Uncertainty = Literal["data", "model", "total"]
UNCERTAINTIES: Tuple[str, ...] = ("data", "model", "total")


def one_hot(value: str, vocabulary: Sequence[str]) -> Tuple[float, ...]:
    """one-hot encode value against a fixed vocabulary

    Args:
        value: member of vocabulary
        vocabulary: ordered categories

    Returns:
        tuple of 0.0 with a single 1.0
    """
    if value not in vocabulary:
        raise ValidationError(f"{value!r} is not one of {', '.join(vocabulary)}")
    return tuple(1.0 if v == value else 0.0 for v in vocabulary)


@dataclass(frozen=True)
class TableNode:
    """a table of the join graph with its local statistics"""
    rows: float
    selectivity: float
    correlation: float
    table_id: int

    def to_dict(self) -> Dict[str, Any]:
        return {"rows": self.rows, "selectivity": self.selectivity,
                "correlation": self.correlation, "table_id": self.table_id}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(float(data["rows"]), float(data["selectivity"]),
                   float(data["correlation"]), int(data["table_id"]))


@dataclass(frozen=True)
class JoinEdge:
    """a join predicate between two tables of the join graph"""
    left: int
    right: int
    join_type: str
    operator: str
    selectivity: float
    skew: float

    def to_dict(self) -> Dict[str, Any]:
        return {"left": self.left, "right": self.right, "join_type": self.join_type,
                "operator": self.operator, "selectivity": self.selectivity, "skew": self.skew}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(int(data["left"]), int(data["right"]), str(data["join_type"]),
                   str(data["operator"]), float(data["selectivity"]), float(data["skew"]))


@dataclass(frozen=True)
class QueryGlobals:
    """graph level attributes broadcast to every table by the query encoder"""
    table_count: int
    join_count: int
    topology: str
    has_aggregate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"table_count": self.table_count, "join_count": self.join_count,
                "topology": self.topology, "has_aggregate": self.has_aggregate}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(int(data["table_count"]), int(data["join_count"]),
                   str(data["topology"]), bool(data.get("has_aggregate", False)))


@dataclass(frozen=True)
class QueryGraph:
    """join graph of a query: tables as nodes, join predicates as edges

    the encoding is agnostic to the plan that will execute the query
    """
    nodes: Tuple[TableNode, ...]
    edges: Tuple[JoinEdge, ...]
    globals: QueryGlobals

    @property
    def table_ids(self) -> Tuple[int, ...]:
        return tuple(node.table_id for node in self.nodes)

    def node_index(self, table_id: int) -> int:
        """position of a catalog table within this query

        Raises:
            ValidationError if the table does not take part in the query
        """
        for idx, node in enumerate(self.nodes):
            if node.table_id == table_id:
                return idx
        raise ValidationError(f"table {table_id} is not part of the query")

    def neighbours(self, idx: int) -> List[int]:
        out = []
        for edge in self.edges:
            if edge.left == idx:
                out.append(edge.right)
            elif edge.right == idx:
                out.append(edge.left)
        return out

    def edges_within(self, node_indices: Sequence[int]) -> List[JoinEdge]:
        """join edges whose both endpoints lie inside node_indices"""
        inside = set(node_indices)
        return [e for e in self.edges if e.left in inside and e.right in inside]

    def is_connected(self) -> bool:
        if not self.nodes:
            return False
        seen = {0}
        stack = [0]
        n = len(self.nodes)
        while stack:
            idx = stack.pop()
            for nb in self.neighbours(idx):
                if 0 <= nb < n and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == n

    def info(self) -> str:
        return (f"{self.globals.topology} query over {len(self.nodes)} tables "
                f"({', '.join(str(t) for t in self.table_ids)}), {len(self.edges)} joins"
                f"{', aggregated' if self.globals.has_aggregate else ''}")

    def to_dict(self) -> Dict[str, Any]:
        return {"nodes": [n.to_dict() for n in self.nodes],
                "edges": [e.to_dict() for e in self.edges],
                "globals": self.globals.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(tuple(TableNode.from_dict(n) for n in data["nodes"]),
                   tuple(JoinEdge.from_dict(e) for e in data["edges"]),
                   QueryGlobals.from_dict(data["globals"]))


@dataclass(frozen=True)
class PlanNode:
    """a plan operator, the tables below it and its children (by node index)

    unary operators keep their input as the left child
    """
    operator: str
    tables: Tuple[int, ...]
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def one_hot(self) -> Tuple[float, ...]:
        return one_hot(self.operator, OPERATORS)

    @property
    def is_leaf(self) -> bool:
        return self.left is None and self.right is None

    def to_dict(self) -> Dict[str, Any]:
        return {"operator": self.operator, "tables": list(self.tables),
                "left": self.left, "right": self.right}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        left = data.get("left")
        right = data.get("right")
        return cls(str(data["operator"]), tuple(int(t) for t in data["tables"]),
                   None if left is None else int(left),
                   None if right is None else int(right))


@dataclass(frozen=True)
class PlanTree:
    """binary operator tree stored as a node list with child indices"""
    nodes: Tuple[PlanNode, ...]
    root: int

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root_node(self) -> PlanNode:
        return self.nodes[self.root]

    def postorder(self) -> List[int]:
        """node indices with children before parents"""
        order: List[int] = []
        stack: List[Tuple[int, bool]] = [(self.root, False)]
        while stack:
            idx, expanded = stack.pop()
            if expanded:
                order.append(idx)
                continue
            stack.append((idx, True))
            node = self.nodes[idx]
            for child in (node.right, node.left):
                if child is not None:
                    stack.append((child, False))
        return order

    def signature(self) -> str:
        """structural fingerprint used to deduplicate plans"""
        def sig(idx: Optional[int]) -> str:
            if idx is None:
                return ""
            node = self.nodes[idx]
            if node.is_leaf:
                return f"{node.operator}[{','.join(str(t) for t in node.tables)}]"
            return f"{node.operator}({sig(node.left)};{sig(node.right)})"
        return sig(self.root)

    def operator_counts(self) -> Dict[str, int]:
        counts = {op: 0 for op in OPERATORS}
        for node in self.nodes:
            if node.operator in counts:
                counts[node.operator] += 1
        return counts

    def info(self) -> str:
        return f"plan ({len(self.nodes)} nodes): {self.signature()}"

    def to_dict(self) -> Dict[str, Any]:
        return {"nodes": [n.to_dict() for n in self.nodes], "root": self.root}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(tuple(PlanNode.from_dict(n) for n in data["nodes"]), int(data["root"]))


@dataclass(frozen=True)
class CostDistribution:
    """predicted cost of a plan in transformed label space

    total_variance always equals data_variance + model_variance, use
    `from_components` to build one
    """
    mean: float
    data_variance: float
    model_variance: float
    total_variance: float

    def __post_init__(self) -> None:
        if self.data_variance < 0 or self.model_variance < 0:
            raise ValidationError(
                f"variances must be >= 0 (data={self.data_variance}, model={self.model_variance})")
        if self.total_variance != self.data_variance + self.model_variance:
            raise ValidationError("total_variance must equal data_variance + model_variance")

    @classmethod
    def from_components(cls, mean: float, data_variance: float, model_variance: float) -> Self:
        data_variance = float(data_variance)
        model_variance = float(model_variance)
        return cls(float(mean), data_variance, model_variance, data_variance + model_variance)

    def variance(self, uncertainty: Uncertainty = "total") -> float:
        """variance component selected by uncertainty (data, model or total)"""
        if uncertainty == "data":
            return self.data_variance
        if uncertainty == "model":
            return self.model_variance
        if uncertainty == "total":
            return self.total_variance
        raise ValidationError(f"unknown uncertainty selector {uncertainty!r}")

    def std(self, uncertainty: Uncertainty = "total") -> float:
        return math.sqrt(self.variance(uncertainty))

    def info(self) -> str:
        return (f"mean {self.mean:.4f}, data var {self.data_variance:.3g}, "
                f"model var {self.model_variance:.3g}, total var {self.total_variance:.3g}")


@dataclass(frozen=True)
class Label:
    """measured (or simulated) execution time of one plan"""
    execution_time: float
    timed_out: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"execution_time": self.execution_time, "timed_out": self.timed_out}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(float(data["execution_time"]), bool(data["timed_out"]))


@dataclass(frozen=True)
class WorkloadSample:
    """a query, its candidate plans and their labels: the training and evaluation unit"""
    query: QueryGraph
    plans: Tuple[PlanTree, ...]
    labels: Tuple[Label, ...]
    split: str = "train"
    template_id: int = 0

    @property
    def times(self) -> List[float]:
        return [label.execution_time for label in self.labels]

    @property
    def best_time(self) -> float:
        return min(self.times)

    def info(self) -> str:
        timeouts = sum(label.timed_out for label in self.labels)
        return (f"template {self.template_id} ({self.split}): {self.query.info()}\n"
                f"  plans: {len(self.plans)}, best time: {self.best_time:.3f}s, timeouts: {timeouts}")

    def to_dict(self) -> Dict[str, Any]:
        return {"query": self.query.to_dict(),
                "plans": [p.to_dict() for p in self.plans],
                "labels": [label.to_dict() for label in self.labels],
                "split": self.split,
                "template_id": self.template_id}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(QueryGraph.from_dict(data["query"]),
                   tuple(PlanTree.from_dict(p) for p in data["plans"]),
                   tuple(Label.from_dict(label) for label in data["labels"]),
                   str(data["split"]), int(data["template_id"]))


@dataclass(frozen=True)
class Violation:
    """a broken type invariant, located by component and index"""
    message: str
    location: str = ""

    def __str__(self) -> str:
        return f"{self.message} ({self.location})" if self.location else self.message


def _validate_query(query: QueryGraph) -> List[Violation]:
    out: List[Violation] = []
    n = len(query.nodes)
    if n == 0:
        out.append(Violation("query has no tables"))
    for idx, node in enumerate(query.nodes):
        loc = f"node {idx}"
        if not node.rows >= 0:
            out.append(Violation("table rows negative", loc))
        if not 0 <= node.selectivity <= 1:
            out.append(Violation("selectivity out of range", loc))
        if not 0 <= node.correlation <= 1:
            out.append(Violation("correlation out of range", loc))
        if node.table_id < 0:
            out.append(Violation("table identifier negative", loc))
    if len(set(query.table_ids)) != n:
        out.append(Violation("duplicate table identifier"))

    endpoints_ok = True
    for idx, edge in enumerate(query.edges):
        loc = f"edge {idx}"
        if not (0 <= edge.left < n and 0 <= edge.right < n):
            out.append(Violation("edge endpoint out of range", loc))
            endpoints_ok = False
        elif edge.left == edge.right:
            out.append(Violation("self edge", loc))
        if edge.join_type not in JOIN_TYPES:
            out.append(Violation("unknown join type", loc))
        if edge.operator not in PREDICATE_OPERATORS:
            out.append(Violation("unknown join predicate operator", loc))
        if not 0 <= edge.selectivity <= 1:
            out.append(Violation("join selectivity out of range", loc))
        if not edge.skew >= 0:
            out.append(Violation("join skew negative", loc))
    if n and endpoints_ok and not query.is_connected():
        out.append(Violation("query graph disconnected"))

    if query.globals.table_count != n:
        out.append(Violation("globals table_count mismatch"))
    if query.globals.join_count != len(query.edges):
        out.append(Violation("globals join_count mismatch"))
    if query.globals.topology not in TOPOLOGIES:
        out.append(Violation("unknown topology"))
    return out


def _validate_plan(plan: PlanTree, query: QueryGraph, plan_idx: int) -> List[Violation]:
    out: List[Violation] = []
    where = f"plan {plan_idx}"
    m = len(plan.nodes)
    if not 0 <= plan.root < m:
        return [Violation("plan root out of range", where)]

    parents = [0] * m
    structure_ok = True
    for idx, node in enumerate(plan.nodes):
        loc = f"{where} node {idx}"
        if node.operator not in OPERATORS:
            out.append(Violation("unknown operator", loc))
        for child in (node.left, node.right):
            if child is None:
                continue
            if not 0 <= child < m:
                out.append(Violation("child index out of range", loc))
                structure_ok = False
            else:
                parents[child] += 1
        if node.left is None and node.right is not None:
            out.append(Violation("right child without left child", loc))
    if not structure_ok:
        return out

    for idx, count in enumerate(parents):
        if idx == plan.root and count != 0:
            out.append(Violation("root has a parent", where))
            structure_ok = False
        elif idx != plan.root and count != 1:
            out.append(Violation("node does not have exactly one parent", f"{where} node {idx}"))
            structure_ok = False
    if structure_ok:
        seen = set()
        stack = [plan.root]
        while stack:
            idx = stack.pop()
            if idx in seen:
                structure_ok = False
                break
            seen.add(idx)
            node = plan.nodes[idx]
            stack.extend(c for c in (node.left, node.right) if c is not None)
        if not structure_ok or len(seen) != m:
            out.append(Violation("plan is not a tree", where))
            return out
    else:
        return out

    query_tables = set(query.table_ids)
    for idx, node in enumerate(plan.nodes):
        loc = f"{where} node {idx}"
        tables = set(node.tables)
        if not tables <= query_tables:
            out.append(Violation("plan references table absent from query", loc))
        if node.is_leaf:
            if node.operator not in ACCESS_OPERATORS or len(node.tables) != 1:
                out.append(Violation("leaf is not an access operator over exactly one table", loc))
            continue
        if node.operator in ACCESS_OPERATORS:
            out.append(Violation("access operator with children", loc))
        children = set()
        for child in (node.left, node.right):
            if child is not None:
                children |= set(plan.nodes[child].tables)
        if tables != children:
            out.append(Violation("table set is not the union of children", loc))
        if node.operator in JOIN_OPERATORS and node.right is None:
            out.append(Violation("join operator without two children", loc))
    if set(plan.root_node.tables) != query_tables:
        out.append(Violation("root table set incomplete", where))
    return out


def _validate_labels(sample: WorkloadSample) -> List[Violation]:
    out: List[Violation] = []
    best = math.inf
    for idx, label in enumerate(sample.labels):
        loc = f"label {idx}"
        if not label.execution_time > 0:
            out.append(Violation("execution time not positive", loc))
            continue
        if label.timed_out:
            threshold = math.ceil(10 * best) if best < math.inf else None
            if threshold is None or label.execution_time != threshold:
                out.append(Violation("timed-out label does not store the timeout threshold", loc))
        else:
            best = min(best, label.execution_time)
    return out


def validate(sample: WorkloadSample) -> List[Violation]:
    """check every type invariant of a workload sample

    violations are returned as data, an empty list means the sample is valid

    Args:
        sample: WorkloadSample

    Returns:
        list of Violation records
    """
    out = _validate_query(sample.query)
    if not sample.plans:
        out.append(Violation("sample has no plans"))
    if len(sample.plans) != len(sample.labels):
        out.append(Violation("plan and label counts differ"))
    if sample.split not in SPLITS:
        out.append(Violation("unknown split"))
    for idx, plan in enumerate(sample.plans):
        out.extend(_validate_plan(plan, sample.query, idx))
    out.extend(_validate_labels(sample))
    return out


def validate_plan(plan: PlanTree, query: QueryGraph) -> List[Violation]:
    """check the PlanTree invariants of a single plan against its query"""
    return _validate_plan(plan, query, 0)


class Workload:
    """Container for multiple WorkloadSample objects with helpful methods for filtering and slicing

    every sample keeps the query id it was given when the workload was created
    (its position in the workload file), filtering never renumbers queries
    """

    def __init__(self, samples: Sequence[WorkloadSample], query_ids: Optional[Sequence[int]] = None) -> None:
        self._samples = list(samples)
        self._ids = list(range(len(self._samples))) if query_ids is None else list(query_ids)
        if len(self._ids) != len(self._samples):
            raise ValidationError("one query id is required per sample")

    def __repr__(self) -> str:
        return f"<Workload n={len(self)}>"

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[WorkloadSample]:
        return iter(self._samples)

    def __getitem__(self, idx: int) -> WorkloadSample:
        return self._samples[idx]

    def __add__(self, other: Self) -> Self:
        return self.__class__(self._samples + other._samples, self._ids + other._ids)

    @property
    def samples(self) -> List[WorkloadSample]:
        return self._samples

    @property
    def query_ids(self) -> List[int]:
        return self._ids

    def items(self) -> Iterator[Tuple[int, WorkloadSample]]:
        """iterate (query id, sample) pairs"""
        return zip(self._ids, self._samples)

    def limit(self, n: int) -> Self:
        """returns a new Workload containing the first n samples"""
        return self.__class__(self._samples[:n], self._ids[:n])

    def filter(self, fn: Callable[[WorkloadSample], bool]) -> Self:
        """returns a new Workload containing all samples for which fn(sample) is true

        Usage:
            >>> long_queries = workload.filter(lambda s: len(s.query.nodes) > 4)
        """
        kept = [(qid, s) for qid, s in self.items() if fn(s)]
        return self.__class__([s for _, s in kept], [qid for qid, _ in kept])

    def split(self, tag: str) -> Self:
        return self.filter(lambda s: s.split == tag)

    def with_templates(self, template_ids: Sequence[int]) -> Self:
        keep = set(template_ids)
        return self.filter(lambda s: s.template_id in keep)

    def without_templates(self, template_ids: Sequence[int]) -> Self:
        drop = set(template_ids)
        return self.filter(lambda s: s.template_id not in drop)

    def template_ids(self) -> List[int]:
        return sorted({s.template_id for s in self._samples})

    def n_plans(self) -> int:
        return sum(len(s.plans) for s in self._samples)

    def info(self) -> str:
        counts = {tag: sum(s.split == tag for s in self._samples) for tag in SPLITS}
        split_str = ", ".join(f"{tag}: {n}" for tag, n in counts.items())
        return (f"Workload (queries: {len(self)}, plans: {self.n_plans()})\n"
                f"  splits: {split_str}\n  templates: {len(self.template_ids())}")
