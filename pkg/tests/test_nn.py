import json

import numpy as np
import pytest

from src.errors import ShapeError, ValidationError, WorkloadIOError
from src.nn import (Adam, Adjacency, Dense, GraphAttention, Tensor, TreeConv, dense_forward, dropout, dynamic_pool,
                    gaussian_nll, graph_readout, load_state_dict, numeric_gradient, read_checkpoint,
                    save_checkpoint, state_dict, tree_conv_layer)
from src.nn.tensor import segment_max

from conftest import chain_plan


def check_gradients(loss_fn, targets, tolerance=1e-4):
    for target in targets:
        target.zero_grad()
    loss_fn().backward()
    for target in targets:
        numeric = numeric_gradient(loss_fn, target)
        analytic = np.zeros_like(numeric) if target.grad is None else target.grad
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / scale <= tolerance


def random_graph(rng):
    """a connected join graph of 1 to 6 tables, a random spanning tree plus up to two chords"""
    n = int(rng.integers(1, 7))
    pairs = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(int(rng.integers(0, 3)) if n > 2 else 0):
        a, b = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
        if (a, b) not in pairs:
            pairs.append((a, b))
    return n, pairs


def random_tree(rng):
    """child rows of a random binary plan tree of 1 to 5 leaves, sometimes under a unary root"""
    n_leaves = int(rng.integers(1, 6))
    left, right = [-1] * n_leaves, [-1] * n_leaves
    roots = list(range(n_leaves))
    while len(roots) > 1:
        left.append(roots.pop(int(rng.integers(0, len(roots)))))
        right.append(roots.pop(int(rng.integers(0, len(roots)))))
        roots.append(len(left) - 1)
    if rng.random() < 0.3:
        left.append(roots[0])
        right.append(-1)
    return np.array(left), np.array(right)


CONFIGURATIONS = range(30)


class TestGradients:
    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_dense(self, seed):
        rng = np.random.default_rng(seed)
        n_in, n_out, rows = (int(v) for v in rng.integers(1, 6, size=3))
        activation = ("identity", "relu", "sigmoid", "leaky_relu")[seed % 4]
        layer = Dense(n_in, n_out, rng, activation=activation)
        x = Tensor(rng.normal(size=(rows, n_in)), requires_grad=True)
        w = rng.normal(size=(rows, n_out))
        check_gradients(lambda: (layer(x) * Tensor(w)).sum(), [x, layer.weight, layer.bias])

    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_dropout_paths(self, seed):
        rng = np.random.default_rng(seed)
        layer = Dense(3, 4, rng, activation="sigmoid")
        x = Tensor(rng.normal(size=(int(rng.integers(1, 6)), 3)), requires_grad=True)
        mode = "deterministic" if seed % 2 else "train"

        def loss():
            # a fresh generator per call keeps the mask fixed across evaluations
            return dropout(layer(x), 0.3, mode, np.random.default_rng(seed)).sum()

        check_gradients(loss, [x, layer.weight, layer.bias])

    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_gaussian_nll(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 10))
        mu = Tensor(rng.normal(size=n), requires_grad=True)
        log_var = Tensor(rng.normal(scale=0.5, size=n), requires_grad=True)
        y = Tensor(rng.normal(size=n))
        check_gradients(lambda: gaussian_nll(mu, log_var, y), [mu, log_var])

    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_graph_attention(self, seed):
        rng = np.random.default_rng(seed)
        n, pairs = random_graph(rng)
        node_dim, edge_dim, global_dim, hidden = (int(v) for v in rng.integers(1, 5, size=4))
        layer = GraphAttention(node_dim, edge_dim, global_dim, hidden, rng)
        nodes = Tensor(rng.normal(size=(n, node_dim)), requires_grad=True)
        edges = Tensor(rng.normal(size=(len(pairs), edge_dim)), requires_grad=True)
        attributes = Tensor(rng.normal(size=(1, global_dim)), requires_grad=True)
        adjacency = Adjacency.undirected(pairs, n)
        w = rng.normal(size=(n, hidden))
        targets = [nodes, attributes, layer.w_self, layer.bias]
        if pairs:
            targets += [edges, layer.w_message, layer.w_edge, layer.w_score]
        check_gradients(lambda: (layer(nodes, edges, attributes, adjacency) * Tensor(w)).sum(), targets)

    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_tree_conv(self, seed):
        rng = np.random.default_rng(seed)
        left, right = random_tree(rng)
        n_in, n_out = (int(v) for v in rng.integers(1, 5, size=2))
        layer = TreeConv(n_in, n_out, rng, activation="leaky_relu")
        layer.zero_child.data[...] = rng.normal(size=(1, n_in))
        x = Tensor(rng.normal(size=(len(left), n_in)), requires_grad=True)
        w = rng.normal(size=(len(left), n_out))
        check_gradients(lambda: (layer(x, left, right) * Tensor(w)).sum(),
                        [x, layer.w_self, layer.w_left, layer.w_right, layer.bias, layer.zero_child])

    def test_tree_conv_over_plan(self, rng):
        layer = TreeConv(3, 4, rng)
        layer.zero_child.data[...] = rng.normal(size=(1, 3))
        x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        w = rng.normal(size=(3, 4))
        plan = chain_plan()
        check_gradients(lambda: (tree_conv_layer(plan, x, layer) * Tensor(w)).sum(),
                        [x, layer.w_self, layer.w_left, layer.w_right, layer.zero_child])

    @pytest.mark.parametrize("seed", CONFIGURATIONS)
    def test_readout_and_pool(self, seed):
        rng = np.random.default_rng(seed)
        n_segments = int(rng.integers(1, 4))
        segments = np.sort(np.concatenate([np.arange(n_segments), rng.integers(0, n_segments, size=4)]))
        d = int(rng.integers(1, 4))
        x = Tensor(rng.normal(size=(len(segments), d)), requires_grad=True)
        w1, w2 = rng.normal(size=(n_segments, 2 * d)), rng.normal(size=(n_segments, d))
        check_gradients(lambda: (graph_readout(x, segments, n_segments) * Tensor(w1)).sum()
                        + (dynamic_pool(x, segments, n_segments) * Tensor(w2)).sum(), [x])


class TestLayers:
    def test_dense_example(self):
        out = dense_forward(Tensor([[1, 2]]), Tensor([[1], [1]]), Tensor([0.5]))
        np.testing.assert_array_equal(out.data, [[3.5]])

    def test_readout_example(self):
        np.testing.assert_array_equal(graph_readout(Tensor([[1, 3], [3, 1]])).data, [2.0, 2.0, 3.0, 3.0])

    def test_segment_max_empty_segment_is_zero(self):
        out = segment_max(Tensor([[1.0], [2.0]]), np.array([0, 0]), 2)
        np.testing.assert_array_equal(out.data, [[2.0], [0.0]])

    def test_attention_weights_sum_to_one(self, rng):
        layer = GraphAttention(2, 1, 1, 3, rng)
        adjacency = Adjacency.undirected([(0, 1), (0, 2)], 3)
        weights = layer.attention_weights(Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 1))),
                                          Tensor([[1.0]]), adjacency)
        sums = np.bincount(adjacency.dst, weights=weights, minlength=3)
        np.testing.assert_allclose(sums, [1.0, 1.0, 1.0])

    def test_forward_keeps_no_per_call_state(self, rng):
        layer = GraphAttention(2, 1, 1, 3, rng)
        before = dict(vars(layer))
        layer(Tensor(rng.normal(size=(2, 2))), Tensor(np.ones((1, 1))), Tensor([[1.0]]),
              Adjacency.undirected([(0, 1)], 2))
        assert vars(layer) == before

    @pytest.mark.parametrize("seed", range(10))
    def test_node_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n, pairs = random_graph(rng)
        layer = GraphAttention(3, 2, 2, 4, rng)
        nodes, edges = rng.normal(size=(n, 3)), rng.normal(size=(len(pairs), 2))
        attributes = Tensor(rng.normal(size=(1, 2)))
        perm = rng.permutation(n)
        position = np.argsort(perm)
        moved = [(int(position[a]), int(position[b])) for a, b in pairs]
        out = graph_readout(layer(Tensor(nodes), Tensor(edges), attributes, Adjacency.undirected(pairs, n)))
        shuffled = graph_readout(layer(Tensor(nodes[perm]), Tensor(edges), attributes, Adjacency.undirected(moved, n)))
        np.testing.assert_allclose(shuffled.data, out.data, rtol=0, atol=1e-12)

    def test_single_node_graph(self, rng):
        layer = GraphAttention(2, 1, 1, 3, rng)
        out = layer(Tensor(np.ones((1, 2))), Tensor(np.zeros((0, 1))), Tensor([[1.0]]), Adjacency.undirected([], 1))
        assert out.shape == (1, 3)


class TestShapeErrors:
    def test_dense_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 3\).*\(2, 1\)"):
            dense_forward(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 1))), Tensor([0.0]))

    def test_nll_mismatch(self):
        with pytest.raises(ShapeError):
            gaussian_nll(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(3)))

    def test_tree_conv_width(self, rng):
        with pytest.raises(ShapeError):
            TreeConv(3, 2, rng)(Tensor(np.ones((2, 4))), np.array([-1, -1]), np.array([-1, -1]))

    def test_tree_conv_row_count(self, rng):
        with pytest.raises(ShapeError):
            tree_conv_layer(chain_plan(), Tensor(np.ones((2, 3))), TreeConv(3, 2, rng))

    def test_attention_adjacency(self, rng):
        layer = GraphAttention(2, 1, 1, 3, rng)
        with pytest.raises(ShapeError):
            layer(Tensor(np.ones((2, 2))), Tensor(np.ones((1, 1))), Tensor([[1.0]]), Adjacency.undirected([(0, 1)], 3))


class TestDropout:
    def test_deterministic_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert dropout(x, 0.5, "deterministic") is x

    def test_train_scales_survivors(self, rng):
        out = dropout(Tensor(np.ones((50, 50))), 0.2, "train", rng).data
        assert set(np.unique(out)) <= {0.0, 1.25}
        assert 0.7 < (out > 0).mean() < 0.9

    def test_preserves_the_mean(self, rng):
        out = dropout(Tensor(np.ones((100, 100))), 0.3, "mc_inference", rng).data
        assert abs(out.mean() - 1.0) < 0.03

    def test_fresh_mask_per_call(self, rng):
        x = Tensor(np.ones((10, 10)))
        a = dropout(x, 0.5, "mc_inference", rng).data
        b = dropout(x, 0.5, "mc_inference", rng).data
        assert not np.array_equal(a, b)

    def test_invalid_arguments(self, rng):
        x = Tensor(np.ones(3))
        with pytest.raises(ValidationError):
            dropout(x, 1.0, "train", rng)
        with pytest.raises(ValidationError):
            dropout(x, 0.1, "eval", rng)
        with pytest.raises(ValidationError):
            dropout(x, 0.1, "train")


class TestOptimiser:
    def test_adam_minimises_quadratic(self, rng):
        layer = Dense(2, 1, rng)
        target = np.array([[1.0], [-2.0]])
        opt = Adam(layer.trainable_parameters(), lr=0.05)
        x = Tensor(np.eye(2))
        for _ in range(1000):
            opt.zero_grad()
            residual = layer(x) - Tensor(target)
            (residual * residual).sum().backward()
            opt.step()
        np.testing.assert_allclose(layer(x).data, target, atol=0.05)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        layer = Dense(3, 2, rng)
        path = str(tmp_path / "ckpt.json")
        save_checkpoint(path, layer, {"n_in": 3, "n_out": 2}, extra={"note": "x"})
        document = read_checkpoint(path)
        assert document["architecture"] == {"n_in": 3, "n_out": 2}
        fresh = Dense(3, 2, np.random.default_rng(99))
        load_state_dict(fresh, document["parameters"])
        np.testing.assert_array_equal(fresh.weight.data, layer.weight.data)
        assert state_dict(fresh) == state_dict(layer)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            load_state_dict(Dense(3, 3, rng), state_dict(Dense(3, 2, rng)))

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"format_version": 7, "architecture": {}, "parameters": {}}))
        with pytest.raises(WorkloadIOError):
            read_checkpoint(str(path))
