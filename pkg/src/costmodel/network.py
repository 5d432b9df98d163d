"""query encoder, plan encoder and the two branch estimator

a batch holds several join graphs (as one disjoint union graph) and the
plans to cost, each plan pointing at its query. Plan nodes are augmented
with the mean of the final table embeddings of the tables below them.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from ..errors import ValidationError
from ..models import OPERATORS, PlanTree, QueryGraph
from ..nn import Adjacency, Dense, GraphAttention, Module, Tensor, TreeConv, dropout, dynamic_pool, graph_readout
from ..nn.checkpoint import load_state_dict, read_checkpoint, save_checkpoint
from ..nn.layers import DropoutMode
from ..nn.tensor import concat, matmul, reshape, take
from .config import ModelConfig
from .preprocess import EncodedPlan, EncodedQuery, PreprocessStats, encode_plan

logger = logging.getLogger(__name__)

ARCHITECTURE = "graph-attention+tree-conv+two-branch-mlp"


@dataclass(frozen=True)
class Batch:
    nodes: np.ndarray
    edges: np.ndarray
    graphs: np.ndarray
    node_graph: np.ndarray
    adjacency: Adjacency
    plan_operators: np.ndarray
    table_pool: np.ndarray
    left: np.ndarray
    right: np.ndarray
    plan_of_node: np.ndarray
    plan_query: np.ndarray

    @property
    def n_graphs(self) -> int:
        return self.graphs.shape[0]

    @property
    def n_plans(self) -> int:
        return len(self.plan_query)


def collate(queries: Sequence[EncodedQuery], plans: Sequence[Tuple[int, EncodedPlan]]) -> Batch:
    """stack encoded queries and plans into one batch

    Args:
        queries: encoded join graphs
        plans: (index into queries, encoded plan) per plan to cost
    """
    node_offsets = np.cumsum([0] + [q.nodes.shape[0] for q in queries])
    pairs = [(a + node_offsets[g], b + node_offsets[g]) for g, q in enumerate(queries) for a, b in q.pairs]
    n_nodes = int(node_offsets[-1])
    adjacency = Adjacency.undirected(pairs, n_nodes)
    node_graph = np.repeat(np.arange(len(queries), dtype=np.int64), [q.nodes.shape[0] for q in queries])

    plan_offsets = np.cumsum([0] + [p.operators.shape[0] for _, p in plans])
    n_plan_nodes = int(plan_offsets[-1])
    table_pool = np.zeros((n_plan_nodes, n_nodes))
    left = np.empty(n_plan_nodes, dtype=np.int64)
    right = np.empty(n_plan_nodes, dtype=np.int64)
    plan_of_node = np.empty(n_plan_nodes, dtype=np.int64)
    for p_idx, (q_idx, plan) in enumerate(plans):
        start = plan_offsets[p_idx]
        for row, members in enumerate(plan.node_tables):
            if members:
                table_pool[start + row, [node_offsets[q_idx] + m for m in members]] = 1.0 / len(members)
        m = plan.operators.shape[0]
        left[start:start + m] = np.where(plan.left < 0, -1, plan.left + start)
        right[start:start + m] = np.where(plan.right < 0, -1, plan.right + start)
        plan_of_node[start:start + m] = p_idx

    width_e = queries[0].edges.shape[1] if queries else 0
    return Batch(
        nodes=np.concatenate([q.nodes for q in queries], axis=0),
        edges=np.concatenate([q.edges for q in queries], axis=0) if queries else np.zeros((0, width_e)),
        graphs=np.stack([q.graph for q in queries]),
        node_graph=node_graph,
        adjacency=adjacency,
        plan_operators=np.concatenate([p.operators for _, p in plans], axis=0).reshape(-1, len(OPERATORS)),
        table_pool=table_pool,
        left=left,
        right=right,
        plan_of_node=plan_of_node,
        plan_query=np.array([q for q, _ in plans], dtype=np.int64),
    )


class CostModel(Module):
    def __init__(self, config: ModelConfig, node_dim: int, edge_dim: int, global_dim: int,
                 rng: np.random.Generator) -> None:
        """the risk aware cost network

        query encoder: attention message passing layers, every layer reading
        the graph attributes, then mean and max readout. Plan encoder: tree
        convolutions over operator one-hots augmented with pooled table
        embeddings, then dynamic pooling. Estimator: a shared hidden layer
        and two branches, a sigmoid mean head and a log variance head.
        Dropout follows every hidden layer. A frozen offset, set by variance
        calibration after training, is added to the log variance.

        Args:
            config: ModelConfig
            node_dim: table feature width
            edge_dim: join feature width
            global_dim: graph attribute width
            rng: initialisation generator
        """
        super().__init__()
        self.config = config
        self.dims = {"node_dim": node_dim, "edge_dim": edge_dim, "global_dim": global_dim}
        h = config.hidden
        self.graph_layers: List[GraphAttention] = []
        for idx in range(config.graph_layers):
            layer = GraphAttention(node_dim if idx == 0 else h, edge_dim, global_dim, h, rng)
            self.graph_layers.append(self.add_module(f"graph.{idx}", layer))
        self.tree_layers: List[TreeConv] = []
        for idx in range(config.tree_layers):
            layer = TreeConv(len(OPERATORS) + h if idx == 0 else h, h, rng, activation="relu")
            self.tree_layers.append(self.add_module(f"tree.{idx}", layer))
        self.shared = self.add_module("shared", Dense(3 * h, h, rng, activation="relu"))
        self.mean_hidden = self.add_module("mean.hidden", Dense(h, h, rng, activation="relu"))
        self.mean_out = self.add_module("mean.out", Dense(h, 1, rng, activation="sigmoid"))
        self.var_hidden = self.add_module("log_var.hidden", Dense(h, h, rng, activation="relu"))
        self.var_out = self.add_module("log_var.out", Dense(h, 1, rng, activation="identity"))
        self.log_var_offset = self.add_parameter("log_var.offset", np.zeros(1), trainable=False)

    def __call__(self, batch: Batch, mode: DropoutMode = "deterministic",
                 rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """cost every plan of the batch

        Returns:
            (mu, log_var), each Tensor[n_plans] in transformed label space
        """
        rate = self.config.dropout

        def drop(x: Tensor) -> Tensor:
            return dropout(x, rate, mode, rng)

        x = Tensor(batch.nodes)
        edges = Tensor(batch.edges)
        graphs = Tensor(batch.graphs)
        for layer in self.graph_layers:
            x = drop(layer(x, edges, graphs, batch.adjacency, batch.node_graph))
        query_embedding = graph_readout(x, batch.node_graph, batch.n_graphs)

        pooled_tables = matmul(Tensor(batch.table_pool), x)
        p = concat([Tensor(batch.plan_operators), pooled_tables], axis=1)
        for layer in self.tree_layers:
            p = drop(layer(p, batch.left, batch.right))
        plan_embedding = dynamic_pool(p, batch.plan_of_node, batch.n_plans)

        z = concat([take(query_embedding, batch.plan_query), plan_embedding], axis=1)
        z = drop(self.shared(z))
        mu = self.mean_out(drop(self.mean_hidden(z)))
        log_var = self.var_out(drop(self.var_hidden(z)))
        return reshape(mu, (-1,)), reshape(log_var, (-1,)) + self.log_var_offset


class TrainedModel:
    def __init__(self, network: CostModel, stats: Optional[PreprocessStats], config: ModelConfig) -> None:
        """a cost network together with the preprocessing it was trained with

        Usage:
            >>> model = TrainedModel.load("out/model.json")
            >>> batch = model.batch(query, plans)
        """
        self.network = network
        self.stats = stats
        self.config = config

    @classmethod
    def initialise(cls, stats: PreprocessStats, config: ModelConfig, seed: int) -> Self:
        network = CostModel(config, stats.node_dim, stats.edge_dim, stats.global_dim, np.random.default_rng(seed))
        return cls(network, stats, config)

    def require_stats(self) -> PreprocessStats:
        if self.stats is None:
            raise ValidationError("the model has no preprocessing statistics, it cannot encode inputs")
        return self.stats

    def batch(self, query: QueryGraph, plans: Sequence[PlanTree]) -> Batch:
        """batch of all given plans of one query"""
        stats = self.require_stats()
        encoded = stats.encode_query(query)
        return collate([encoded], [(0, encode_plan(plan, query)) for plan in plans])

    def forward(self, query: QueryGraph, plan: PlanTree, mode: DropoutMode = "deterministic",
                rng: Optional[np.random.Generator] = None) -> Tuple[float, float]:
        """(mu, log variance) of one plan in transformed label space"""
        mu, log_var = self.network(self.batch(query, [plan]), mode, rng)
        return float(mu.data[0]), float(log_var.data[0])

    def architecture(self) -> Dict[str, Any]:
        return {"name": ARCHITECTURE, **self.network.dims, "config": self.config.to_dict()}

    def save(self, path: str) -> None:
        extra = {"preprocess": None if self.stats is None else self.stats.to_dict()}
        save_checkpoint(path, self.network, self.architecture(), extra)

    @classmethod
    def load(cls, path: str) -> Self:
        """rebuild a model from a checkpoint written by `save`"""
        document = read_checkpoint(path)
        arch = document["architecture"]
        config = ModelConfig.from_dict(arch["config"])
        network = CostModel(config, arch["node_dim"], arch["edge_dim"], arch["global_dim"],
                            np.random.default_rng(0))
        load_state_dict(network, document["parameters"])
        raw_stats = document.get("preprocess")
        stats = None if raw_stats is None else PreprocessStats.from_dict(raw_stats)
        logger.info("Loaded model from %s (%d parameters)", path, network.n_parameters())
        return cls(network, stats, config)

    def __repr__(self) -> str:
        return f"<TrainedModel hidden={self.config.hidden} dropout={self.config.dropout}>"
