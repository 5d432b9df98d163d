"""neural building blocks: dense layers, dropout, the gaussian likelihood,
attention message passing over join graphs, tree convolution and pooling"""
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from ..errors import ShapeError, ValidationError
from ..models import PlanTree
from .tensor import (Parameter, Tensor, concat, exp, leaky_relu, matmul, relu,
                     segment_max, segment_sum, sigmoid, take)

Activation = Literal["identity", "relu", "sigmoid", "leaky_relu"]
DropoutMode = Literal["train", "mc_inference", "deterministic"]
DROPOUT_MODES: Tuple[str, ...] = ("train", "mc_inference", "deterministic")
LOG_2PI = math.log(2.0 * math.pi)


def activate(x: Tensor, activation: Activation) -> Tensor:
    if activation == "identity":
        return x
    if activation == "relu":
        return relu(x)
    if activation == "sigmoid":
        return sigmoid(x)
    if activation == "leaky_relu":
        return leaky_relu(x)
    raise ValidationError(f"unknown activation {activation!r}")


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Module:
    """base class of every layer and model

    parameters and sub-modules are registered explicitly and named by
    dotted paths, e.g. `encoder.layers.0.weight`
    """

    def __init__(self) -> None:
        self._parameters: Dict[str, Parameter] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_parameter(self, name: str, values: np.ndarray, trainable: bool = True) -> Parameter:
        param = Parameter(values, name=name, trainable=trainable)
        self._parameters[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} parameters={self.n_parameters()}>"


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor, activation: Activation = "identity") -> Tensor:
    """activation(x W + b)

    Usage:
        >>> dense_forward(Tensor([[1, 2]]), Tensor([[1], [1]]), Tensor([0.5])).data
        array([[3.5]])

    Raises:
        ShapeError naming both shapes when x and W do not conform
    """
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input shape {x.shape} does not match weight shape {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias shape {bias.shape} does not match weight shape {weight.shape}")
    return activate(matmul(x, weight) + bias, activation)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, activation: Activation = "identity") -> None:
        """fully connected layer with xavier uniform weights and zero bias"""
        super().__init__()
        self.weight = self.add_parameter("weight", xavier_uniform(n_in, n_out, rng))
        self.bias = self.add_parameter("bias", np.zeros(n_out))
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.weight, self.bias, self.activation)


def dropout(x: Tensor, rate: float, mode: DropoutMode, rng: Optional[np.random.Generator] = None) -> Tensor:
    """inverted dropout

    train and mc_inference zero each unit with probability `rate` and scale
    survivors by 1/(1-rate), drawing a fresh mask per call; deterministic is
    the identity

    Args:
        x: input Tensor
        rate: drop probability in [0, 1)
        mode: train, mc_inference or deterministic
        rng: mask generator, required when units can be dropped

    Returns:
        Tensor with the shape of x
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in DROPOUT_MODES:
        raise ValidationError(f"unknown dropout mode {mode!r}")
    if mode == "deterministic" or rate == 0.0:
        return x
    if rng is None:
        raise ValidationError("dropout in train or mc_inference mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def gaussian_nll(mu: Tensor, log_var: Tensor, y: Tensor) -> Tensor:
    """mean negative log likelihood of y under N(mu, exp(log_var))

    (1/n) sum[ log_var/2 + (y - mu)^2 / (2 exp(log_var)) + log(2 pi)/2 ]

    Raises:
        ShapeError when the three shapes differ
    """
    if not mu.shape == log_var.shape == y.shape:
        raise ShapeError(f"gaussian_nll: shapes {mu.shape}, {log_var.shape} and {y.shape} differ")
    residual = y - mu
    terms = 0.5 * log_var + 0.5 * residual * residual * exp(-log_var) + 0.5 * LOG_2PI
    return terms.mean()


@dataclass(frozen=True)
class Adjacency:
    """directed message routes of one or more join graphs

    every undirected join edge yields two routes that share its feature row
    """
    src: np.ndarray
    dst: np.ndarray
    edge: np.ndarray
    n_nodes: int

    @classmethod
    def undirected(cls, pairs: Sequence[Tuple[int, int]], n_nodes: int) -> Self:
        """routes for edges given as (left, right) node index pairs"""
        left = np.array([p[0] for p in pairs], dtype=np.int64)
        right = np.array([p[1] for p in pairs], dtype=np.int64)
        if len(pairs) and (min(left.min(), right.min()) < 0 or max(left.max(), right.max()) >= n_nodes):
            raise ValidationError(f"edge endpoint out of range for {n_nodes} nodes")
        ids = np.arange(len(pairs), dtype=np.int64)
        return cls(np.concatenate([left, right]), np.concatenate([right, left]),
                   np.concatenate([ids, ids]), n_nodes)

    @property
    def n_routes(self) -> int:
        return len(self.src)


class GraphAttention(Module):
    def __init__(self, node_dim: int, edge_dim: int, global_dim: int, hidden: int,
                 rng: np.random.Generator, negative_slope: float = 0.2) -> None:
        """single head attention message passing with graph level attributes

        the graph attributes are concatenated onto every node before the
        layer runs; each route is scored from (target, neighbour, edge),
        scores are softmax normalised over the target's neighbourhood and
        the weighted neighbour messages are added to the node's self
        transform

        Args:
            node_dim: node feature width
            edge_dim: edge feature width
            global_dim: graph attribute width
            hidden: output width
            rng: initialisation generator
        """
        super().__init__()
        d_in = node_dim + global_dim
        self.node_dim, self.edge_dim, self.global_dim = node_dim, edge_dim, global_dim
        self.negative_slope = negative_slope
        self.w_self = self.add_parameter("w_self", xavier_uniform(d_in, hidden, rng))
        self.bias = self.add_parameter("bias", np.zeros(hidden))
        self.w_message = self.add_parameter("w_message", xavier_uniform(d_in, hidden, rng))
        self.w_edge = self.add_parameter("w_edge", xavier_uniform(edge_dim, hidden, rng))
        self.w_score = self.add_parameter("w_score", xavier_uniform(2 * d_in + edge_dim, 1, rng))

    def _propagate(self, nodes: Tensor, edges: Tensor, graph_attributes: Tensor, adjacency: Adjacency,
                   node_graph: Optional[np.ndarray]) -> Tuple[Tensor, Optional[Tensor]]:
        n = nodes.shape[0]
        if nodes.ndim != 2 or nodes.shape[1] != self.node_dim:
            raise ShapeError(f"attention: node shape {nodes.shape} does not match width {self.node_dim}")
        if adjacency.n_nodes != n:
            raise ShapeError(f"attention: adjacency over {adjacency.n_nodes} nodes for node shape {nodes.shape}")
        if node_graph is None:
            node_graph = np.zeros(n, dtype=np.int64)
        h = concat([nodes, take(graph_attributes, node_graph)], axis=1)
        out = matmul(h, self.w_self) + self.bias
        if not adjacency.n_routes:
            return relu(out), None
        target = take(h, adjacency.dst)
        neighbour = take(h, adjacency.src)
        edge = take(edges, adjacency.edge)
        score = leaky_relu(matmul(concat([target, neighbour, edge], axis=1), self.w_score), self.negative_slope)
        # softmax per target, shifted by the (constant) neighbourhood max
        shift = take(segment_max(score, adjacency.dst, n).detach(), adjacency.dst)
        weight = exp(score - shift)
        alpha = weight / take(segment_sum(weight, adjacency.dst, n), adjacency.dst)
        message = matmul(neighbour, self.w_message) + matmul(edge, self.w_edge)
        return relu(out + segment_sum(alpha * message, adjacency.dst, n)), alpha

    def __call__(self, nodes: Tensor, edges: Tensor, graph_attributes: Tensor, adjacency: Adjacency,
                 node_graph: Optional[np.ndarray] = None) -> Tensor:
        """
        Args:
            nodes: Tensor[N, node_dim]
            edges: Tensor[E, edge_dim]
            graph_attributes: Tensor[G, global_dim], one row per graph
            adjacency: message routes over the N nodes
            node_graph: graph of every node, all zeros when omitted

        Returns:
            Tensor[N, hidden]
        """
        return self._propagate(nodes, edges, graph_attributes, adjacency, node_graph)[0]

    def attention_weights(self, nodes: Tensor, edges: Tensor, graph_attributes: Tensor, adjacency: Adjacency,
                          node_graph: Optional[np.ndarray] = None) -> np.ndarray:
        """attention weight of every route, the weights into each node sum to 1"""
        _, alpha = self._propagate(nodes, edges, graph_attributes, adjacency, node_graph)
        return np.zeros(0) if alpha is None else alpha.data[:, 0].copy()


def _segments(n_rows: int, segments: Optional[np.ndarray], n_segments: Optional[int]) -> Tuple[np.ndarray, int]:
    if n_rows == 0:
        raise ValidationError("pooling needs at least one row")
    if segments is None:
        return np.zeros(n_rows, dtype=np.int64), 1
    segments = np.asarray(segments, dtype=np.int64)
    return segments, int(n_segments if n_segments is not None else segments.max() + 1)


def graph_readout(embeddings: Tensor, segments: Optional[np.ndarray] = None,
                  n_segments: Optional[int] = None) -> Tensor:
    """concatenated element-wise mean and max over the nodes of each graph

    Usage:
        >>> graph_readout(Tensor([[1, 3], [3, 1]])).data
        array([2., 2., 3., 3.])

    Returns:
        Tensor[2d] for a single graph, Tensor[G, 2d] when segments are given
    """
    single = segments is None
    segments, n_segments = _segments(embeddings.shape[0], segments, n_segments)
    counts = np.bincount(segments, minlength=n_segments).astype(np.float64)
    mean = segment_sum(embeddings, segments, n_segments) / Tensor(np.maximum(counts, 1.0)[:, None])
    out = concat([mean, segment_max(embeddings, segments, n_segments)], axis=1)
    return out.reshape(-1) if single else out


def dynamic_pool(embeddings: Tensor, segments: Optional[np.ndarray] = None,
                 n_segments: Optional[int] = None) -> Tensor:
    """element-wise max over the nodes of each plan tree

    Returns:
        Tensor[d] for a single tree, Tensor[P, d] when segments are given
    """
    single = segments is None
    segments, n_segments = _segments(embeddings.shape[0], segments, n_segments)
    out = segment_max(embeddings, segments, n_segments)
    return out.reshape(-1) if single else out


def child_indices(plan: PlanTree, offset: int = 0, missing: int = -1) -> Tuple[np.ndarray, np.ndarray]:
    """left and right child row of every plan node, `missing` where there is none"""
    left = np.array([missing if n.left is None else n.left + offset for n in plan.nodes], dtype=np.int64)
    right = np.array([missing if n.right is None else n.right + offset for n in plan.nodes], dtype=np.int64)
    return left, right


class TreeConv(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, activation: Activation = "relu") -> None:
        """convolution over (node, left child, right child) triples

        missing children read a learned zero-child vector, initialised at zero
        """
        super().__init__()
        self.n_in = n_in
        self.w_self = self.add_parameter("w_self", xavier_uniform(n_in, n_out, rng))
        self.w_left = self.add_parameter("w_left", xavier_uniform(n_in, n_out, rng))
        self.w_right = self.add_parameter("w_right", xavier_uniform(n_in, n_out, rng))
        self.bias = self.add_parameter("bias", np.zeros(n_out))
        self.zero_child = self.add_parameter("zero_child", np.zeros((1, n_in)))
        self.activation = activation

    def __call__(self, x: Tensor, left: np.ndarray, right: np.ndarray) -> Tensor:
        """
        Args:
            x: Tensor[M, n_in], one row per plan node (several trees may be stacked)
            left: left child row per node, -1 for none
            right: right child row per node, -1 for none

        Returns:
            Tensor[M, n_out]
        """
        m = x.shape[0]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"tree conv: input shape {x.shape} does not match width {self.n_in}")
        extended = concat([x, self.zero_child], axis=0)
        left = np.where(np.asarray(left) < 0, m, left)
        right = np.where(np.asarray(right) < 0, m, right)
        out = (matmul(x, self.w_self) + matmul(take(extended, left), self.w_left)
               + matmul(take(extended, right), self.w_right) + self.bias)
        return activate(out, self.activation)


def tree_conv_layer(plan: PlanTree, node_feats: Tensor, layer: TreeConv) -> Tensor:
    """apply a TreeConv to the node features of a single plan"""
    if node_feats.shape[0] != len(plan.nodes):
        raise ShapeError(f"tree conv: {node_feats.shape[0]} feature rows for a plan of {len(plan.nodes)} nodes")
    left, right = child_indices(plan)
    return layer(node_feats, left, right)


def graph_attention_layer(node_feats: Tensor, edge_feats: Tensor, graph_attributes: Tensor,
                          adjacency: Adjacency, layer: GraphAttention) -> Tensor:
    """apply a GraphAttention layer to a single join graph

    graph_attributes may be given as a vector, it is broadcast to every node
    """
    if graph_attributes.ndim == 1:
        graph_attributes = graph_attributes.reshape(1, -1)
    return layer(node_feats, edge_feats, graph_attributes, adjacency)
