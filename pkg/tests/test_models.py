import math

import numpy as np
import pytest

from specshift import nn
from specshift.datasets import Dataset
from specshift.graph import cycle_graph, from_edge_list
from specshift.models import (
    ModelConfig,
    as_tensors,
    augcyc_prepare,
    backbone_forward,
    forward,
    graph_loss,
    init_params,
    predict_logits,
    prepare,
    readout,
    sia_readout,
    sia_weights,
    ssl_loss,
)
from specshift.nn import Tensor
from specshift.spectral import spectral_filter_apply


def toy_graph(features=None, label=1):
    # triangle 0-1-2 fused to square 2-3-4-5 plus a pendant; 6 nodes, 2 cycles
    edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 2)]
    return from_edge_list(6, edges, features, label)


def rand_params(config, in_dim, seed):
    rng = np.random.default_rng(seed)
    params = init_params(config, in_dim, 2, rng)
    # move off zero so biases and wA are exercised
    return {k: v + 0.3 * rng.normal(size=v.shape) for k, v in params.items()}


def test_config_text_round_trip():
    cfg = ModelConfig(backbone="mlp", readout="sia", ssl_lambda=0.01, augcyc_n=7, augcyc_r=8, hidden=16)
    assert ModelConfig.from_text(cfg.to_text()) == cfg
    assert cfg.augcyc == (7, 8)


def test_config_comments_and_errors():
    cfg = ModelConfig.from_text("# BBBP\nreadout = sia  # attention\nssl_lambda = 1\n")
    assert cfg.readout == "sia" and cfg.ssl_lambda == 1.0
    with pytest.raises(ValueError, match="unknown key"):
        ModelConfig.from_text("depth = 3\n")
    with pytest.raises(ValueError):
        ModelConfig(backbone="gat")
    with pytest.raises(ValueError):
        ModelConfig(augcyc_n=3)


def test_mlp_identity_single_node():
    cfg = ModelConfig(backbone="mlp", hidden=3)
    x = np.array([[0.5, 2.0, 1.0]])
    g = from_edge_list(1, [], x)
    params = {f"W{l}": np.eye(3) for l in range(3)} | {f"b{l}": np.zeros((1, 3)) for l in range(3)}
    out = backbone_forward(cfg, prepare(g), as_tensors(params))
    assert out.data.tolist() == x.tolist()


def test_gcn_vertex_transitive_rows_identical():
    cfg = ModelConfig(hidden=5)
    g = cycle_graph(3)
    out = backbone_forward(cfg, prepare(g), as_tensors(rand_params(cfg, 1, 0))).data
    np.testing.assert_allclose(out, np.repeat(out[:1], 3, axis=0), atol=1e-14)


def test_gcn_single_linear_layer_matches_spectral_path():
    rng = np.random.default_rng(5)
    edges = [(i, j) for i in range(12) for j in range(i + 1, 12) if rng.random() < 0.3]
    x = rng.normal(size=(12, 4))
    g = from_edge_list(12, edges, x)
    cfg = ModelConfig(layers=1, hidden=4)
    params = {"W0": np.eye(4), "b0": np.zeros((1, 4))}
    out = backbone_forward(cfg, prepare(g), as_tensors(params)).data
    assert np.linalg.norm(out - spectral_filter_apply(g, [0.0, 1.0], x)) < 1e-8


# SIA


def test_sia_zero_weights_is_global_max_bitwise():
    rng = np.random.default_rng(1)
    inp = prepare(toy_graph(rng.normal(size=(6, 3))))
    x_last = Tensor(rng.normal(size=(6, 4)))
    sia = sia_readout(inp.cycle_feats, x_last, Tensor(np.zeros((2, 1)))).data
    gmax = nn.global_max_rows(x_last).data
    assert sia.tobytes() == gmax.tobytes()


def test_sia_single_node():
    x = Tensor([[1.5, -2.0]])
    out = sia_readout(np.array([[0.0, 0.0]]), x, Tensor([[0.7], [-1.2]]))
    assert out.data.tolist() == [[1.5, -2.0]]


def test_sia_constant_cycle_features():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(5, 3)))
    c = np.tile([[1.0, 4.0]], (5, 1))
    out = sia_readout(c, x, Tensor([[2.0], [-0.3]])).data
    np.testing.assert_allclose(out, x.data.max(axis=0, keepdims=True), rtol=1e-14)


def test_sia_weights_mean_one():
    inp = prepare(toy_graph())
    k = sia_weights(inp.cycle_feats, Tensor([[0.8], [0.25]])).data
    assert k.mean() == pytest.approx(1.0, abs=1e-14)


def test_sia_isolated_node_renormalization():
    w = Tensor([[0.8], [0.25]])
    g = toy_graph()
    h = from_edge_list(7, g.edges)
    c, c2 = prepare(g).cycle_feats, prepare(h).cycle_feats
    k = sia_weights(c, w).data[:, 0]
    k2 = sia_weights(c2, w).data[:, 0]
    s = (c @ w.data)[:, 0]
    sigma = np.exp(s).sum()
    sigma2 = sigma + 1.0  # isolated node: zero cycle features, score 0
    # k_i = N e^{s_i} / sigma, so old weights scale by N' sigma / (N sigma')
    np.testing.assert_allclose(k2[:6], k * (7 * sigma) / (6 * sigma2), rtol=1e-13)
    assert k2[6] == pytest.approx(7 / sigma2, rel=1e-13)
    # GCN reps of existing nodes are untouched by the isolated node
    cfg = ModelConfig(hidden=4)
    params = as_tensors(rand_params(cfg, 1, 3))
    a = backbone_forward(cfg, prepare(g), params).data
    b = backbone_forward(cfg, prepare(h), params).data
    np.testing.assert_allclose(b[:6], a, rtol=1e-13, atol=1e-15)


def test_empty_graph_readout():
    with pytest.raises(ValueError, match="empty graph readout"):
        sia_weights(np.zeros((0, 2)), Tensor(np.zeros((2, 1))))


# SSL


def test_ssl_uniform_head_is_ln2():
    reps = Tensor(np.random.default_rng(0).normal(size=(6, 4)))
    params = as_tensors({"Ws1": np.zeros((4, 4)), "bs1": np.zeros((1, 4)), "Ws2": np.zeros((4, 2)), "bs2": np.zeros((1, 2))})
    for membership in ([0] * 6, [1, 0, 1, 0, 1, 1]):
        assert ssl_loss(reps, np.array(membership), params).item() == pytest.approx(math.log(2), abs=1e-15)


def test_lambda_zero_is_plain_loss_bitwise():
    g = toy_graph()
    inp = prepare(g)
    with_ssl = ModelConfig(hidden=4, ssl_lambda=0.5)
    params = as_tensors(rand_params(with_ssl, 1, 4))
    plain = graph_loss(ModelConfig(hidden=4, ssl_lambda=0.0), inp, params).item()
    direct = nn.cross_entropy_from_logits(forward(with_ssl, inp, params).logits, [1]).item()
    assert plain == direct


def test_full_composite_gradcheck():
    cfg = ModelConfig(hidden=4, readout="sia", ssl_lambda=0.7)
    rng = np.random.default_rng(8)
    inp = prepare(toy_graph(rng.normal(size=(6, 2))))
    params = rand_params(cfg, 2, 8)
    assert nn.gradcheck(lambda p: graph_loss(cfg, inp, p), params) < 1e-4


@pytest.mark.parametrize("cfg", [
    ModelConfig(hidden=6, readout="sia"),
    ModelConfig(hidden=6, readout="global_mean"),
    ModelConfig(backbone="mlp", hidden=6, readout="global_max"),
])
def test_permutation_invariance(cfg):
    rng = np.random.default_rng(9)
    g = toy_graph(rng.normal(size=(6, 3)))
    params = rand_params(cfg, 3, 9)
    perm = rng.permutation(6)
    base = predict_logits(cfg, prepare(g), params)
    moved = predict_logits(cfg, prepare(g.relabel(perm)), params)
    assert np.max(np.abs(base - moved)) <= 1e-10


def test_readout_global_mean():
    x = Tensor([[1.0, 2.0], [3.0, 6.0]])
    cfg = ModelConfig(readout="global_mean")
    assert readout(cfg, None, x, {}).data.tolist() == [[2.0, 4.0]]


def test_featureless_graph_gets_ones_column():
    inp = prepare(cycle_graph(4))
    assert inp.x.tolist() == [[1.0]] * 4


# AugCyc


def test_augcyc_only_first_index_with_huge_r():
    graphs = [cycle_graph(3 + i % 4).with_label(i % 2) for i in range(100)]
    d = Dataset(graphs)
    train = list(range(100))
    out = augcyc_prepare(train, d, 1, 10**9, seed=0)
    assert out[0].n == 4
    assert all(a == b for a, b in zip(out[1:], graphs[1:]))


def test_augcyc_leaves_dataset_untouched():
    graphs = [cycle_graph(5).with_label(0), cycle_graph(6).with_label(1)]
    d = Dataset(graphs)
    out = augcyc_prepare([1], d, 2, 1, seed=0)
    assert out[0].n == 8
    assert d.graphs[1].n == 6
