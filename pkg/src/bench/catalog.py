"""synthetic table catalog, query templates and the generator configuration"""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Tuple

import numpy as np
from typing_extensions import Self

from ..datasources import load_config
from ..errors import ConfigurationError
from ..models import JOIN_TYPES, PREDICATE_OPERATORS, JoinEdge, QueryGlobals, QueryGraph, TableNode


@dataclass(frozen=True)
class GeneratorConfig:
    """settings of the synthetic workload generator

    Usage:
        >>> cfg = GeneratorConfig.from_file("configs/generator.json")
    """
    n_queries: int = 1000
    n_templates: int = 15
    catalog_size: int = 24
    split_ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    noise_range: Tuple[float, float] = (0.02, 0.25)
    sensitivity_range: Tuple[float, float] = (0.8, 1.2)
    min_tables: int = 1
    max_tables: int = 6
    seed: int = 1

    def __post_init__(self) -> None:
        if self.n_queries < 1 or self.n_templates < 1:
            raise ConfigurationError("n_queries and n_templates must be >= 1")
        if not 1 <= self.min_tables <= self.max_tables:
            raise ConfigurationError("need 1 <= min_tables <= max_tables")
        if self.catalog_size < self.max_tables:
            raise ConfigurationError(
                f"catalog_size {self.catalog_size} is smaller than max tables per template {self.max_tables}")
        if len(self.split_ratios) != 3 or any(r < 0 for r in self.split_ratios) \
                or not math.isclose(sum(self.split_ratios), 1.0, abs_tol=1e-9):
            raise ConfigurationError(f"split_ratios must be three non-negative fractions summing to 1, got {self.split_ratios}")
        lo, hi = self.noise_range
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"invalid noise_range {self.noise_range}")
        lo, hi = self.sensitivity_range
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"invalid sensitivity_range {self.sensitivity_range}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown generator config keys: {', '.join(sorted(unknown))}")
        values = dict(data)
        for key in ("split_ratios", "noise_range", "sensitivity_range"):
            if key in values:
                values[key] = tuple(float(v) for v in values[key])
        return cls(**values)

    @classmethod
    def from_file(cls, path: str) -> Self:
        """read a generator config; a document with a `generator` section uses that section"""
        data = load_config(path)
        return cls.from_dict(data.get("generator", data))

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key in ("split_ratios", "noise_range", "sensitivity_range"):
            out[key] = list(out[key])
        return out


class Catalog:
    def __init__(self, rows: List[float]) -> None:
        """fixed catalog of synthetic tables, identified by their index

        Args:
            rows: base cardinality of each table
        """
        self.rows = rows

    @classmethod
    def random(cls, size: int, rng: np.random.Generator) -> Self:
        """tables with base rows log-uniform in [1e3, 1e7]"""
        return cls([float(round(10 ** rng.uniform(3, 7))) for _ in range(size)])

    def __len__(self) -> int:
        return len(self.rows)

    def __repr__(self) -> str:
        return f"<Catalog tables={len(self)}>"


@dataclass(frozen=True)
class QueryTemplate:
    """structure shared by every query instantiated from the template"""
    template_id: int
    topology: str
    tables: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]
    has_aggregate: bool
    selectivity_exponents: Tuple[float, float]
    correlation_range: Tuple[float, float]
    skew_range: Tuple[float, float]
    noise_fraction: float
    sensitivity: float

    def info(self) -> str:
        return (f"template {self.template_id}: {self.topology} over tables {list(self.tables)}"
                f"{' with aggregate' if self.has_aggregate else ''}")


def _topology_edges(topology: str, k: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    chain = [(i, i + 1) for i in range(k - 1)]
    if topology == "chain":
        return chain
    if topology == "star":
        return [(0, i) for i in range(1, k)]
    if topology == "cycle":
        return chain + [(k - 1, 0)]
    # clique-like: chain plus chords, a full clique for small k
    pairs = [(i, j) for i in range(k) for j in range(i + 2, k) if not (i == 0 and j == k - 1)]
    if k <= 4:
        chords = pairs
    else:
        n_chords = int(rng.integers(1, len(pairs) + 1))
        chosen = rng.choice(len(pairs), size=n_chords, replace=False)
        chords = [pairs[i] for i in sorted(chosen)]
    closing = [(0, k - 1)] if k >= 3 else []
    return chain + closing + chords


def make_templates(config: GeneratorConfig, catalog: Catalog, rng: np.random.Generator) -> List[QueryTemplate]:
    """draw the structural templates of a workload

    Raises:
        ConfigurationError when the catalog cannot hold the largest template
    """
    if len(catalog) < config.max_tables:
        raise ConfigurationError(
            f"catalog has {len(catalog)} tables, templates need up to {config.max_tables}")
    templates = []
    for template_id in range(config.n_templates):
        k = int(rng.integers(config.min_tables, config.max_tables + 1))
        topologies = ["chain"] if k < 3 else ["chain", "star", "cycle", "clique-like"]
        topology = topologies[int(rng.integers(len(topologies)))]
        tables = tuple(int(t) for t in rng.choice(len(catalog), size=k, replace=False))
        edges = tuple(_topology_edges(topology, k, rng))

        sel_lo = float(rng.uniform(-3.0, -1.0))
        corr_lo = float(rng.uniform(0.0, 0.6))
        skew_lo = float(rng.uniform(0.0, 1.0))
        noise_lo, noise_hi = config.noise_range
        noise = float(rng.uniform(noise_lo, noise_hi))
        sens_lo, sens_hi = config.sensitivity_range
        templates.append(QueryTemplate(
            template_id=template_id,
            topology=topology,
            tables=tables,
            edges=edges,
            has_aggregate=bool(rng.random() < 0.4),
            selectivity_exponents=(sel_lo, min(sel_lo + 1.5, 0.0)),
            correlation_range=(corr_lo, corr_lo + 0.4),
            skew_range=(skew_lo, skew_lo + 1.0),
            noise_fraction=noise,
            sensitivity=float(rng.uniform(sens_lo, sens_hi)),
        ))
    return templates


@dataclass(frozen=True)
class CardinalityErrors:
    """hidden multiplicative errors of one query instance

    true rows of a table subset = independence estimate * product of the
    table factors * product of the join factors inside the subset
    """
    table_factors: Tuple[float, ...]
    edge_factors: Tuple[float, ...] = field(default_factory=tuple)


def table_error_sigma(correlation: float) -> float:
    """log-space spread of a table's cardinality error, growing with predicate correlation"""
    return 0.1 + 1.5 * correlation


def edge_error_sigma(skew: float) -> float:
    """log-space spread of a join's cardinality error, growing with join column skew"""
    return 0.1 + 0.8 * skew


def sample_query(template: QueryTemplate, catalog: Catalog,
                 rng: np.random.Generator) -> Tuple[QueryGraph, CardinalityErrors]:
    """instantiate a query of the template with its hidden cardinality errors"""
    nodes = []
    for table_id in template.tables:
        lo, hi = template.selectivity_exponents
        nodes.append(TableNode(
            rows=catalog.rows[table_id],
            selectivity=float(10 ** rng.uniform(lo, hi)),
            correlation=float(rng.uniform(*template.correlation_range)),
            table_id=table_id,
        ))
    edges = []
    for left, right in template.edges:
        largest = max(nodes[left].rows, nodes[right].rows)
        selectivity = min(1.0, float(rng.uniform(0.5, 2.0)) / largest)
        join_type = JOIN_TYPES[int(rng.choice(len(JOIN_TYPES), p=[0.8, 0.1, 0.1]))]
        operator = PREDICATE_OPERATORS[int(rng.choice(len(PREDICATE_OPERATORS), p=[0.85, 0.075, 0.075]))]
        edges.append(JoinEdge(left, right, join_type, operator, selectivity,
                              float(rng.uniform(*template.skew_range))))
    query = QueryGraph(tuple(nodes), tuple(edges), QueryGlobals(
        len(nodes), len(edges), template.topology, template.has_aggregate))

    errors = CardinalityErrors(
        tuple(float(np.exp(rng.normal(0.0, table_error_sigma(n.correlation)))) for n in nodes),
        tuple(float(np.exp(rng.normal(0.0, edge_error_sigma(e.skew)))) for e in edges),
    )
    return query, errors
